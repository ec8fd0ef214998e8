#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "rpcate/data.hpp"
#include "rpcate/tensor.hpp"

namespace rpcate::testing {

inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

inline Dataset make_random_dataset(int m, int n, std::uint64_t seed,
                                   bool allow_duplicate_sort_values = false) {
    std::mt19937_64 rng(seed);
    Dataset d;
    for (int j = 0; j < n; ++j) d.feature_names.push_back("x" + std::to_string(j));
    d.features = Tensor({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double v = uniform01(rng);
            if (allow_duplicate_sort_values && j == 0)
                v = std::round(v * 4.0) / 4.0;  // coarse grid forces ties
            d.features.at(i, j) = v;
        }
    d.y_true.resize(static_cast<std::size_t>(m));
    d.y_me.resize(static_cast<std::size_t>(m));
    d.y.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        double me = 0.5 + 0.4 * d.features.at(i, 0);
        double bias = 0.2 * d.features.at(i, 0) * d.features.at(i, 0) +
                      0.05 * uniform(rng, -1.0, 1.0);
        d.y_me[static_cast<std::size_t>(i)] = me;
        d.y_true[static_cast<std::size_t>(i)] = me + bias;
        d.y[static_cast<std::size_t>(i)] = bias;
    }
    return d;
}

/// Fill every trainable array (biases included) with uniform(-half, half) so
/// gradient checks run at a generic point.
template <typename Params>
inline void randomize_params(Params& params, std::uint64_t seed, double half = 0.5) {
    std::mt19937_64 rng(seed);
    for (Tensor* t : params.trainable())
        for (double& x : t->data()) x = uniform(rng, -half, half);
}

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("rpcate_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace rpcate::testing
