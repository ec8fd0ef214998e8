#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "rpcate/synthetic.hpp"
#include "rpcate/training.hpp"

namespace rpcate {

/// Invalid or inconsistent run configuration (usage error, exit code 2).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// One JSON document drives every command; flags override individual fields.
struct RunConfig {
    std::optional<std::filesystem::path> dataset;  // exactly one of these two
    std::optional<GenConfig> generator;
    std::optional<std::string> x_prime_name;  // resolved against the loaded header
    int eval_count = -1;                      // tail rows held out; -1 means m/6
    std::filesystem::path out = "out";
    std::optional<std::filesystem::path> dataset_out;  // generate target override
    int jobs = 1;
    TrainConfig train;
    GridSpec grid;
};

RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

/// Exactly one of dataset/generator present; a dataset path must exist.
void validate_data_source(const RunConfig& cfg);

}  // namespace rpcate
