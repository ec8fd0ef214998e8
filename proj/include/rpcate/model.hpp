#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rpcate/data.hpp"
#include "rpcate/tensor.hpp"

namespace rpcate {

enum class Ablation { Full, NoRp, NoCa };
enum class ResidualMode { Text, Literal };

Ablation parse_ablation(const std::string& name);
std::string ablation_name(Ablation a);
ResidualMode parse_residual_mode(const std::string& name);
std::string residual_mode_name(ResidualMode mode);

struct HyperParams {
    int x_prime = 0;
    int window = 25;        // w, perfect square
    int repetitions = 2;    // N
    double lr = 0.001;
    int d_h = 0;            // 0 resolves to 4n
    int d_m = 0;            // 0 resolves to 4n
    int n1 = 0, n2 = 0;     // 0 resolves to 2n; must satisfy n1 == n2 > n
    int n3 = 0, n4 = 0;     // 0 resolves to 2n; must satisfy n3 > n, n4 > n
    double lambda = 0.0;
    int epochs = 2000;
    std::uint64_t seed = 0;
    bool share_params = false;
    ResidualMode residual = ResidualMode::Text;
    bool squared_norm = false;  // lambda * ||theta||^2 instead of lambda * ||theta||

    /// Fill width defaults against the feature count and validate constraints.
    HyperParams resolved(int n_features) const;
};

// Trainable arrays, grouped per repetition. Ablations drop the unused group.
struct RpBlock {
    Tensor U, W, b_hl1;      // recurrent hidden layer
    Tensor V, b_hl2, W_hl2, b;  // perceptron output layer
};

struct FfnPair {
    Tensor w1, b1, w2, b2;   // two layers, relu after the first
};

struct Ffn3 {
    Tensor w1, b1, w2, b2, w3, b3;  // three layers, sigmoid after each
};

struct RepetitionParams {
    std::optional<RpBlock> rp;
    std::optional<FfnPair> ffn_max, ffn_avg;
    Ffn3 ffn3;
};

class ModelParams {
public:
    int n_features = 0;
    HyperParams hp;             // resolved
    Ablation ablation = Ablation::Full;
    std::vector<RepetitionParams> reps;  // one entry when hp.share_params
    Tensor head_w;              // n x 1
    Tensor head_b;              // 1 x 1

    static ModelParams init(int n_features, const HyperParams& hp,
                            Ablation ablation = Ablation::Full);

    int stored_reps() const { return static_cast<int>(reps.size()); }
    const RepetitionParams& rep(int r) const {
        return reps[hp.share_params ? 0 : static_cast<std::size_t>(r)];
    }

    /// Fixed enumeration order shared by the optimizer, regularizer and
    /// checkpoint: repetition blocks first, prediction head last.
    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;
    std::vector<std::pair<std::string, Tensor*>> named();

    bool all_finite() const;
};

// Tape-bound views of the parameters for one forward/backward pass.
struct BoundFfnPair {
    Tape::Var w1, b1, w2, b2;
};

struct BoundFfn3 {
    Tape::Var w1, b1, w2, b2, w3, b3;
};

struct BoundRep {
    bool has_rp = false;
    Tape::Var U, W, b_hl1, V, b_hl2, W_hl2, b;
    bool has_ca = false;
    BoundFfnPair ffn_max, ffn_avg;
    BoundFfn3 ffn3;
};

struct BoundModel {
    std::vector<BoundRep> reps;  // one per repetition (shared params rebind the same vars)
    Tape::Var head_w, head_b;
    std::vector<Tape::Var> trainable;  // aligned with ModelParams::trainable()
};

BoundModel bind_params(Tape& tape, const ModelParams& params, bool trainable = true);

/// Recurrent scan h_i = sigma(x_i U + h_{i-1} W + b_HL1) with h_0 = 0,
/// followed by the two-layer perceptron applied to every step's state.
/// Identity map under the no_rp ablation.
Tape::Var rp_forward(Tape& tape, Tape::Var input, const BoundRep& rep);

/// Per-feature weights from pooled PID statistics: softmax(sigmoid(FFN1(GMP) +
/// FFN2(GAP))). Uniform 1/n under the no_ca ablation.
Tape::Var channel_attention(Tape& tape, Tape::Var y_rp, int window, const BoundRep& rep);

Tape::Var ffm_forward(Tape& tape, Tape::Var y_rp_weighted, const BoundFfn3& ffn3);

Tape::Var predict_head(Tape& tape, Tape::Var y_ffm, Tape::Var head_w, Tape::Var head_b);

struct ForwardResult {
    Tape::Var prediction;              // m x 1, PSD order
    std::vector<Tape::Var> attentions; // one per repetition
};

/// The looped forward pass: repetitions chained with a residual connection to
/// the initial PSD, prediction taken after the final repetition.
ForwardResult model_forward(Tape& tape, Tape::Var psd, const BoundModel& bound,
                            const ModelParams& params);

/// Forward-only evaluation: PSD sort, forward pass, un-sort back to dataset
/// order. Corrections and attention rows are aligned with the input rows.
struct EvalOutput {
    Tensor corrections;             // m x 1
    std::vector<Tensor> attentions; // per repetition, m x n
};

EvalOutput evaluate_model(const ModelParams& params, const Dataset& d,
                          const MinMaxScaler* scaler = nullptr);

}  // namespace rpcate
