#include "rpcate/synthetic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace rpcate {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Mechanistic surrogate: fixed polynomial-plus-exponential map of the features,
// g(x) = 1.4 + sum_j 0.3/(j+1) * x_j + 0.2*x_0^2 + 0.15*exp(-3*x_0).
// The offset puts mean y_true near 1.9, so with the default bias amplitude the
// mechanistic-only relative error lands at a few percent.
double surrogate(const Tensor& X, int row, int n) {
    double g = 1.4;
    for (int j = 0; j < n; ++j) g += 0.3 / (j + 1) * X.at(row, j);
    double x0 = X.at(row, 0);
    return g + 0.2 * x0 * x0 + 0.15 * std::exp(-3.0 * x0);
}

// Bias amplitudes target mean |b| ~= 10 * noise_std, floored so that
// zero-noise datasets still carry structure.
// monotone: E[x0^2] = 1/3  ->  c = 30 * noise_std
// periodic: E|sin(4 pi x0)| = 2/pi  ->  c = 5 pi * noise_std
double monotone_amp(double noise_std) { return std::max(30.0 * noise_std, 0.3); }
double periodic_amp(double noise_std) { return std::max(5.0 * kPi * noise_std, kPi / 20.0); }

double bias_value(BiasKind kind, double x0, double noise_std) {
    switch (kind) {
        case BiasKind::Monotone:
            return monotone_amp(noise_std) * x0 * x0;
        case BiasKind::Periodic:
            return periodic_amp(noise_std) * std::sin(4.0 * kPi * x0);
        case BiasKind::Mixed:
            return monotone_amp(noise_std) * x0 * x0 +
                   periodic_amp(noise_std) * std::sin(4.0 * kPi * x0);
    }
    return 0.0;
}

// Box-Muller from explicit uniform draws; keeps the stream independent of
// library distribution internals.
class Gaussian {
public:
    explicit Gaussian(std::mt19937_64& rng) : rng_(rng) {}
    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = std::max(uniform(), 1e-300);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

private:
    double uniform() {
        return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    }
    std::mt19937_64& rng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace

BiasKind parse_bias_kind(const std::string& name) {
    if (name == "monotone") return BiasKind::Monotone;
    if (name == "periodic") return BiasKind::Periodic;
    if (name == "mixed") return BiasKind::Mixed;
    throw std::invalid_argument("unknown bias_kind '" + name +
                                "' (expected monotone, periodic, or mixed)");
}

std::string bias_kind_name(BiasKind kind) {
    switch (kind) {
        case BiasKind::Monotone: return "monotone";
        case BiasKind::Periodic: return "periodic";
        case BiasKind::Mixed: return "mixed";
    }
    return "?";
}

Dataset generate(const GenConfig& cfg) {
    if (cfg.m < 2) throw std::invalid_argument("generator needs m >= 2");
    if (cfg.n < 1) throw std::invalid_argument("generator needs n >= 1");
    if (cfg.noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");

    std::mt19937_64 rng(cfg.seed);
    auto uniform01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };

    Dataset d;
    d.feature_names.reserve(static_cast<std::size_t>(cfg.n));
    for (int j = 0; j < cfg.n; ++j) d.feature_names.push_back("x" + std::to_string(j));

    std::vector<double> flat(static_cast<std::size_t>(cfg.m) * cfg.n);
    for (double& v : flat) v = uniform01();
    d.features = Tensor({cfg.m, cfg.n}, std::move(flat));

    Gaussian gauss(rng);
    d.y_true.resize(static_cast<std::size_t>(cfg.m));
    d.y_me.resize(static_cast<std::size_t>(cfg.m));
    d.y.resize(static_cast<std::size_t>(cfg.m));
    for (int i = 0; i < cfg.m; ++i) {
        double g = surrogate(d.features, i, cfg.n);
        double b = bias_value(cfg.bias_kind, d.features.at(i, 0), cfg.noise_std);
        double eps = cfg.noise_std > 0.0 ? cfg.noise_std * gauss.next() : 0.0;
        d.y_me[static_cast<std::size_t>(i)] = g;
        d.y_true[static_cast<std::size_t>(i)] = g + b + eps;
        // y_true - y_me rather than b + eps: keeps the residual bitwise
        // consistent with what a CSV round-trip recomputes
        d.y[static_cast<std::size_t>(i)] =
            d.y_true[static_cast<std::size_t>(i)] - d.y_me[static_cast<std::size_t>(i)];
    }
    return d;
}

}  // namespace rpcate
