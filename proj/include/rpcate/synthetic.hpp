#pragma once

#include <cstdint>
#include <string>

#include "rpcate/data.hpp"

namespace rpcate {

enum class BiasKind { Monotone, Periodic, Mixed };

BiasKind parse_bias_kind(const std::string& name);
std::string bias_kind_name(BiasKind kind);

struct GenConfig {
    int m = 360;
    int n = 3;
    std::uint64_t seed = 0;
    BiasKind bias_kind = BiasKind::Monotone;
    double noise_std = 0.01;
};

/// Desk-scale hybrid-modeling dataset: a smooth mechanistic surrogate plus a
/// structured bias (monotone and/or periodic in feature 0) plus Gaussian noise.
Dataset generate(const GenConfig& cfg);

}  // namespace rpcate
