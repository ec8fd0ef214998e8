#include "rpcate/training.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "rpcate/log.hpp"

namespace rpcate {
namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double theta_norm(const ModelParams& params) {
    double sq = 0.0;
    for (const Tensor* t : params.trainable())
        for (double x : t->data()) sq += x * x;
    return std::sqrt(sq);
}

std::string csv_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += "\"";
    return out;
}

}  // namespace

Tape::Var loss_op(Tape& tape, Tape::Var y_hat, Tape::Var y,
                  std::span<const Tape::Var> params, double lambda, bool squared_norm) {
    const Tensor& yv = tape.value(y);
    if (!tape.value(y_hat).same_shape(yv) || yv.ndim() != 2 || yv.dim(1) != 1)
        throw ShapeError("loss expects matching m x 1 predictions and targets");
    if (lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
    // recording ops below may reallocate the tape's node store, so the value
    // reference must not be used past this point
    const int m = yv.dim(0);

    Tape::Var diff = tape.sub(y_hat, y);
    Tape::Var mse = tape.scale(tape.sum(tape.hadamard(diff, diff)), 1.0 / m);
    if (lambda == 0.0 || params.empty()) return mse;
    Tape::Var norm = tape.l2_norm(params);
    if (squared_norm) norm = tape.hadamard(norm, norm);
    return tape.add(mse, tape.scale(norm, lambda));
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(const std::vector<Tensor*>& params,
                         const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size())
        throw ShapeError("optimizer got mismatched parameter and gradient lists");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(params[i]->size(), 0.0);
            v_[i].assign(params[i]->size(), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        std::span<double> p = params[i]->data();
        std::span<const double> g = grads[i]->data();
        if (p.size() != g.size())
            throw ShapeError("gradient size does not match its parameter");
        for (std::size_t k = 0; k < p.size(); ++k) {
            m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
            v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
            double mhat = m_[i][k] / bc1;
            double vhat = v_[i][k] / bc2;
            p[k] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

TrainResult train(const Dataset& train_split, const TrainConfig& cfg) {
    HyperParams hp = cfg.hp.resolved(train_split.n());
    if (train_split.m() < hp.window)
        throw std::invalid_argument("training split of " + std::to_string(train_split.m()) +
                                    " rows is smaller than the window w=" +
                                    std::to_string(hp.window));

    TrainResult result;
    Dataset scaled = train_split;
    if (cfg.normalize) {
        result.scaler = MinMaxScaler::fit(train_split.features);
        scaled.features = result.scaler->apply(train_split.features);
    }

    PsdView view = to_psd(scaled, hp.x_prime);
    Tensor targets = Tensor::column(view.sorted_targets);

    result.params = ModelParams::init(train_split.n(), hp, cfg.ablation);
    AdamOptimizer adam(hp.lr);
    result.loss_history.reserve(static_cast<std::size_t>(hp.epochs));
    result.norm_history.reserve(static_cast<std::size_t>(hp.epochs));

    for (int epoch = 1; epoch <= hp.epochs; ++epoch) {
        Tape tape;
        BoundModel bound = bind_params(tape, result.params);
        Tape::Var psd = tape.input(view.sorted_features);
        Tape::Var y = tape.input(targets);

        Tape::Var loss;
        try {
            ForwardResult fwd = model_forward(tape, psd, bound, result.params);
            loss = loss_op(tape, fwd.prediction, y, bound.trainable, hp.lambda,
                           hp.squared_norm);
        } catch (const NumericError& e) {
            throw TrainingDiverged(epoch, "training diverged at epoch " +
                                              std::to_string(epoch) + ": " + e.what());
        }
        result.loss_history.push_back(tape.value(loss)[0]);

        tape.backward(loss);
        std::vector<Tensor*> params = result.params.trainable();
        std::vector<const Tensor*> grads;
        grads.reserve(bound.trainable.size());
        for (Tape::Var v : bound.trainable) grads.push_back(&tape.grad(v));
        adam.step(params, grads);

        if (!result.params.all_finite())
            throw TrainingDiverged(epoch, "training diverged at epoch " +
                                              std::to_string(epoch) +
                                              ": parameters became non-finite");
        result.norm_history.push_back(theta_norm(result.params));

        if (epoch % 200 == 0 || epoch == hp.epochs) {
            std::ostringstream os;
            os << "epoch " << epoch << "/" << hp.epochs << " loss "
               << result.loss_history.back();
            log(2, os.str());
        }
    }
    return result;
}

ModelParams build_ablation(int n_features, const TrainConfig& cfg) {
    return ModelParams::init(n_features, cfg.hp, cfg.ablation);
}

GridResult grid_search(const Dataset& train_split, const Dataset& val_split,
                       const TrainConfig& base, const GridSpec& grid, int jobs) {
    if (grid.windows.empty() || grid.repetitions.empty() || grid.learning_rates.empty())
        throw std::invalid_argument("grid search needs non-empty w, N and lr lists");
    for (int w : grid.windows)
        if (w < 1) throw std::invalid_argument("grid window sizes must be positive");
    for (int n : grid.repetitions)
        if (n < 1) throw std::invalid_argument("grid repetition counts must be positive");
    for (double lr : grid.learning_rates)
        if (lr <= 0.0) throw std::invalid_argument("grid learning rates must be positive");

    GridResult result;
    for (int w : grid.windows)
        for (int reps : grid.repetitions)
            for (double lr : grid.learning_rates) {
                GridCell cell;
                cell.index = static_cast<int>(result.cells.size());
                cell.hp = base.hp;
                cell.hp.window = w;
                cell.hp.repetitions = reps;
                cell.hp.lr = lr;
                cell.hp.seed = base.hp.seed + static_cast<std::uint64_t>(cell.index);
                result.cells.push_back(std::move(cell));
            }

    auto run_cell = [&](GridCell& cell) {
        try {
            TrainConfig cfg = base;
            cfg.hp = cell.hp;
            TrainResult tr = train(train_split, cfg);
            cell.hp = tr.params.hp;  // resolved widths
            EvalOutput eval = evaluate_model(
                tr.params, val_split, tr.scaler ? &*tr.scaler : nullptr);
            std::tie(cell.mech, cell.hybrid) = full_report(eval.corrections, val_split);
            cell.ok = true;
            std::ostringstream os;
            os << "grid cell " << cell.index << " (w=" << cell.hp.window
               << ", N=" << cell.hp.repetitions << ", lr=" << cell.hp.lr << ") MIR "
               << cell.hybrid.mir_percent;
            log(1, os.str());
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
            log(1, "grid cell " + std::to_string(cell.index) + " failed: " + cell.error);
        }
    };

    int workers = std::max(1, jobs);
    workers = std::min<int>(workers, static_cast<int>(result.cells.size()));
    if (workers <= 1) {
        for (GridCell& cell : result.cells) run_cell(cell);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t i = next.fetch_add(1);
                    if (i >= result.cells.size()) return;
                    run_cell(result.cells[i]);
                }
            });
        for (std::thread& t : pool) t.join();
    }

    for (const GridCell& cell : result.cells) {
        if (!cell.ok) continue;
        if (result.best_index < 0) {
            result.best_index = cell.index;
            continue;
        }
        const GridCell& best = result.cells[static_cast<std::size_t>(result.best_index)];
        const auto key = [](const GridCell& c) {
            return std::make_tuple(-c.hybrid.mir_percent, c.hybrid.mae, c.hp.repetitions,
                                   c.hp.window, c.index);
        };
        if (key(cell) < key(best)) result.best_index = cell.index;
    }
    return result;
}

void write_grid_csv(const GridResult& result, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "w,N,lr,mae,rmse,are_percent,err_lt_1pct,err_gt_5pct,mir_percent,status\n";
    for (const GridCell& cell : result.cells) {
        out << cell.hp.window << "," << cell.hp.repetitions << ","
            << format_double(cell.hp.lr) << ",";
        if (cell.ok) {
            out << format_double(cell.hybrid.mae) << "," << format_double(cell.hybrid.rmse)
                << "," << format_double(cell.hybrid.are_percent) << ","
                << cell.hybrid.err_lt_1pct << "," << cell.hybrid.err_gt_5pct << ","
                << format_double(cell.hybrid.mir_percent) << ",ok\n";
        } else {
            out << ",,,,,," << csv_quote("failed: " + cell.error) << "\n";
        }
    }
    if (!out.flush()) throw std::runtime_error("failed writing '" + path.string() + "'");
}

void write_loss_csv(const std::vector<double>& loss_history,
                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out << "epoch,train_loss\n";
    for (std::size_t i = 0; i < loss_history.size(); ++i)
        out << (i + 1) << "," << format_double(loss_history[i]) << "\n";
    if (!out.flush()) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace rpcate
