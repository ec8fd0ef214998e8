#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpcate/data.hpp"
#include "rpcate/metrics.hpp"
#include "rpcate/model.hpp"
#include "rpcate/tensor.hpp"

namespace rpcate {

/// Loss became NaN/Inf; `epoch` is the 1-based epoch that failed.
struct TrainingDiverged : std::runtime_error {
    int epoch;
    TrainingDiverged(int epoch_, const std::string& what)
        : std::runtime_error(what), epoch(epoch_) {}
};

struct TrainConfig {
    HyperParams hp;
    Ablation ablation = Ablation::Full;
    bool normalize = false;  // min-max scale features, fit on the train split
};

/// Mean squared error plus lambda * ||theta|| over all trainable parameters
/// (lambda * ||theta||^2 when squared_norm is set).
Tape::Var loss_op(Tape& tape, Tape::Var y_hat, Tape::Var y,
                  std::span<const Tape::Var> params, double lambda, bool squared_norm);

/// Full-batch Adam with bias correction.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8);
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);
    long steps_taken() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
    ModelParams params;
    std::vector<double> loss_history;  // loss at each epoch, before that epoch's update
    std::vector<double> norm_history;  // ||theta|| after each epoch's update
    std::optional<MinMaxScaler> scaler;
};

/// Initialize from cfg.hp.seed and run full-batch Adam for hp.epochs epochs.
TrainResult train(const Dataset& train_split, const TrainConfig& cfg);

/// A parameter set honoring cfg.ablation, ready for model_forward.
ModelParams build_ablation(int n_features, const TrainConfig& cfg);

struct GridSpec {
    std::vector<int> windows{9, 25};
    std::vector<int> repetitions{1, 2, 3, 4, 5};
    std::vector<double> learning_rates{0.01, 0.001};
};

struct GridCell {
    int index = 0;
    HyperParams hp;  // resolved cell hyperparams, seed = base seed + index
    bool ok = false;
    std::string error;
    MetricsReport mech, hybrid;  // validation-split reports when ok
};

struct GridResult {
    std::vector<GridCell> cells;
    int best_index = -1;  // -1 when every cell failed
};

/// Trains one model per (w, N, lr) cell and scores the validation split by
/// MIR; ties break toward lower MAE, then smaller N, then smaller w, then
/// cell index. Cell failures are recorded, not fatal. Cells run concurrently
/// up to `jobs`; results do not depend on scheduling.
GridResult grid_search(const Dataset& train_split, const Dataset& val_split,
                       const TrainConfig& base, const GridSpec& grid, int jobs = 1);

void write_grid_csv(const GridResult& result, const std::filesystem::path& path);
void write_loss_csv(const std::vector<double>& loss_history,
                    const std::filesystem::path& path);

}  // namespace rpcate
