#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rpcate/model.hpp"

namespace rpcate {

/// Unreadable, malformed or inconsistent checkpoint file.
struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

nlohmann::json hyperparams_to_json(const HyperParams& hp);
HyperParams hyperparams_from_json(const nlohmann::json& j);

struct Checkpoint {
    ModelParams params;
    std::optional<MinMaxScaler> scaler;  // present when features were normalized
};

/// JSON checkpoint. Doubles are written in shortest round-trip form, so a
/// save/load cycle reproduces every parameter bit for bit.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path,
                     const MinMaxScaler* scaler = nullptr);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rpcate
