#include "rpcate/model.hpp"

#include <cmath>
#include <cstddef>
#include <random>
#include <sstream>
#include <unordered_map>

namespace rpcate {
namespace {

bool is_perfect_square(int w) {
    if (w < 1) return false;
    int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(w))));
    return k * k == w;
}

void require(bool ok, const std::string& message) {
    if (!ok) throw std::invalid_argument(message);
}

/// Uniform draws in [-bound, bound] from explicit 53-bit mantissas, so
/// initialization is reproducible independent of the platform's
/// distribution implementations.
class UniformInit {
public:
    explicit UniformInit(std::uint64_t seed) : rng_(seed) {}

    double draw(double bound) {
        double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;  // [0, 1)
        return (2.0 * u - 1.0) * bound;
    }

    void fill(Tensor& t, int fan_in) {
        double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& x : t.data()) x = draw(bound);
    }

private:
    std::mt19937_64 rng_;
};

}  // namespace

Ablation parse_ablation(const std::string& name) {
    if (name == "full") return Ablation::Full;
    if (name == "no_rp") return Ablation::NoRp;
    if (name == "no_ca") return Ablation::NoCa;
    throw std::invalid_argument("unknown ablation '" + name +
                                "' (expected full, no_rp or no_ca)");
}

std::string ablation_name(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::NoRp: return "no_rp";
        case Ablation::NoCa: return "no_ca";
    }
    return "full";
}

ResidualMode parse_residual_mode(const std::string& name) {
    if (name == "text") return ResidualMode::Text;
    if (name == "literal") return ResidualMode::Literal;
    throw std::invalid_argument("unknown residual mode '" + name +
                                "' (expected text or literal)");
}

std::string residual_mode_name(ResidualMode mode) {
    return mode == ResidualMode::Text ? "text" : "literal";
}

HyperParams HyperParams::resolved(int n_features) const {
    require(n_features >= 1, "feature count must be at least 1");
    HyperParams r = *this;
    const int n = n_features;
    if (r.d_h <= 0) r.d_h = 4 * n;
    if (r.d_m <= 0) r.d_m = 4 * n;
    if (r.n1 <= 0 && r.n2 <= 0) {
        r.n1 = r.n2 = 2 * n;
    } else if (r.n1 <= 0) {
        r.n1 = r.n2;
    } else if (r.n2 <= 0) {
        r.n2 = r.n1;
    }
    if (r.n3 <= 0) r.n3 = 2 * n;
    if (r.n4 <= 0) r.n4 = 2 * n;

    require(r.x_prime >= 0 && r.x_prime < n,
            "sort feature index " + std::to_string(r.x_prime) +
                " out of range for " + std::to_string(n) + " features");
    require(is_perfect_square(r.window),
            "window w=" + std::to_string(r.window) + " is not a perfect square");
    require(r.repetitions >= 1, "repetitions N must be at least 1");
    require(r.lr >= 0.0, "learning rate must be non-negative");
    require(r.lambda >= 0.0, "lambda must be non-negative");
    require(r.epochs >= 1, "epochs must be at least 1");
    require(r.n1 == r.n2, "attention widths must satisfy n1 == n2");
    require(r.n1 > n, "attention width n1=" + std::to_string(r.n1) +
                          " must exceed the feature count n=" + std::to_string(n));
    require(r.n3 > n, "feed-forward width n3=" + std::to_string(r.n3) +
                          " must exceed the feature count n=" + std::to_string(n));
    require(r.n4 > n, "feed-forward width n4=" + std::to_string(r.n4) +
                          " must exceed the feature count n=" + std::to_string(n));
    return r;
}

ModelParams ModelParams::init(int n_features, const HyperParams& hp, Ablation ablation) {
    ModelParams p;
    p.n_features = n_features;
    p.hp = hp.resolved(n_features);
    p.ablation = ablation;

    const int n = n_features;
    const HyperParams& h = p.hp;
    UniformInit rng(h.seed);

    int stored = h.share_params ? 1 : h.repetitions;
    p.reps.resize(static_cast<std::size_t>(stored));
    for (auto& rep : p.reps) {
        if (ablation != Ablation::NoRp) {
            RpBlock rp;
            rp.U = Tensor({n, h.d_h});
            rng.fill(rp.U, n);
            rp.W = Tensor({h.d_h, h.d_h});
            rng.fill(rp.W, h.d_h);
            rp.b_hl1 = Tensor({1, h.d_h});
            rp.V = Tensor({h.d_h, h.d_m});
            rng.fill(rp.V, h.d_h);
            rp.b_hl2 = Tensor({1, h.d_m});
            rp.W_hl2 = Tensor({h.d_m, n});
            rng.fill(rp.W_hl2, h.d_m);
            rp.b = Tensor({1, n});
            rep.rp = std::move(rp);
        }
        if (ablation != Ablation::NoCa) {
            auto make_pair = [&](int width) {
                FfnPair f;
                f.w1 = Tensor({n, width});
                rng.fill(f.w1, n);
                f.b1 = Tensor({1, width});
                f.w2 = Tensor({width, n});
                rng.fill(f.w2, width);
                f.b2 = Tensor({1, n});
                return f;
            };
            rep.ffn_max = make_pair(h.n1);
            rep.ffn_avg = make_pair(h.n2);
        }
        rep.ffn3.w1 = Tensor({n, h.n3});
        rng.fill(rep.ffn3.w1, n);
        rep.ffn3.b1 = Tensor({1, h.n3});
        rep.ffn3.w2 = Tensor({h.n3, h.n4});
        rng.fill(rep.ffn3.w2, h.n3);
        rep.ffn3.b2 = Tensor({1, h.n4});
        rep.ffn3.w3 = Tensor({h.n4, n});
        rng.fill(rep.ffn3.w3, h.n4);
        rep.ffn3.b3 = Tensor({1, n});
    }
    p.head_w = Tensor({n, 1});
    rng.fill(p.head_w, n);
    p.head_b = Tensor({1, 1});
    return p;
}

namespace {

template <typename Params, typename Tp, typename Fn>
void enumerate_named(Params& p, Fn&& emit) {
    for (int i = 0; i < p.stored_reps(); ++i) {
        auto& rep = p.reps[static_cast<std::size_t>(i)];
        std::string s = "_" + std::to_string(i + 1);
        if (rep.rp) {
            emit("U" + s, static_cast<Tp>(&rep.rp->U));
            emit("W" + s, static_cast<Tp>(&rep.rp->W));
            emit("b_HL1" + s, static_cast<Tp>(&rep.rp->b_hl1));
            emit("V" + s, static_cast<Tp>(&rep.rp->V));
            emit("b_HL2" + s, static_cast<Tp>(&rep.rp->b_hl2));
            emit("W_HL2" + s, static_cast<Tp>(&rep.rp->W_hl2));
            emit("b" + s, static_cast<Tp>(&rep.rp->b));
        }
        if (rep.ffn_max) {
            emit("FFN1_W1" + s, static_cast<Tp>(&rep.ffn_max->w1));
            emit("FFN1_b1" + s, static_cast<Tp>(&rep.ffn_max->b1));
            emit("FFN1_W2" + s, static_cast<Tp>(&rep.ffn_max->w2));
            emit("FFN1_b2" + s, static_cast<Tp>(&rep.ffn_max->b2));
            emit("FFN2_W1" + s, static_cast<Tp>(&rep.ffn_avg->w1));
            emit("FFN2_b1" + s, static_cast<Tp>(&rep.ffn_avg->b1));
            emit("FFN2_W2" + s, static_cast<Tp>(&rep.ffn_avg->w2));
            emit("FFN2_b2" + s, static_cast<Tp>(&rep.ffn_avg->b2));
        }
        emit("FFN3_W1" + s, static_cast<Tp>(&rep.ffn3.w1));
        emit("FFN3_b1" + s, static_cast<Tp>(&rep.ffn3.b1));
        emit("FFN3_W2" + s, static_cast<Tp>(&rep.ffn3.w2));
        emit("FFN3_b2" + s, static_cast<Tp>(&rep.ffn3.b2));
        emit("FFN3_W3" + s, static_cast<Tp>(&rep.ffn3.w3));
        emit("FFN3_b3" + s, static_cast<Tp>(&rep.ffn3.b3));
    }
    emit("W_L", static_cast<Tp>(&p.head_w));
    emit("b_L", static_cast<Tp>(&p.head_b));
}

}  // namespace

std::vector<Tensor*> ModelParams::trainable() {
    std::vector<Tensor*> out;
    enumerate_named<ModelParams, Tensor*>(
        *this, [&](const std::string&, Tensor* t) { out.push_back(t); });
    return out;
}

std::vector<const Tensor*> ModelParams::trainable() const {
    std::vector<const Tensor*> out;
    enumerate_named<const ModelParams, const Tensor*>(
        *this, [&](const std::string&, const Tensor* t) { out.push_back(t); });
    return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    std::vector<std::pair<std::string, Tensor*>> out;
    enumerate_named<ModelParams, Tensor*>(
        *this, [&](const std::string& name, Tensor* t) { out.emplace_back(name, t); });
    return out;
}

bool ModelParams::all_finite() const {
    for (const Tensor* t : trainable())
        if (!t->all_finite()) return false;
    return true;
}

BoundModel bind_params(Tape& tape, const ModelParams& params, bool trainable) {
    BoundModel bm;
    std::unordered_map<const Tensor*, Tape::Var> vars;
    for (const Tensor* t : params.trainable()) {
        Tape::Var v = tape.input(*t, trainable);
        vars.emplace(t, v);
        bm.trainable.push_back(v);
    }
    auto at = [&](const Tensor& t) { return vars.at(&t); };

    bm.reps.resize(static_cast<std::size_t>(params.hp.repetitions));
    for (int r = 0; r < params.hp.repetitions; ++r) {
        const RepetitionParams& src = params.rep(r);
        BoundRep& dst = bm.reps[static_cast<std::size_t>(r)];
        if (src.rp) {
            dst.has_rp = true;
            dst.U = at(src.rp->U);
            dst.W = at(src.rp->W);
            dst.b_hl1 = at(src.rp->b_hl1);
            dst.V = at(src.rp->V);
            dst.b_hl2 = at(src.rp->b_hl2);
            dst.W_hl2 = at(src.rp->W_hl2);
            dst.b = at(src.rp->b);
        }
        if (src.ffn_max) {
            dst.has_ca = true;
            dst.ffn_max = {at(src.ffn_max->w1), at(src.ffn_max->b1),
                           at(src.ffn_max->w2), at(src.ffn_max->b2)};
            dst.ffn_avg = {at(src.ffn_avg->w1), at(src.ffn_avg->b1),
                           at(src.ffn_avg->w2), at(src.ffn_avg->b2)};
        }
        dst.ffn3 = {at(src.ffn3.w1), at(src.ffn3.b1), at(src.ffn3.w2),
                    at(src.ffn3.b2), at(src.ffn3.w3), at(src.ffn3.b3)};
    }
    bm.head_w = at(params.head_w);
    bm.head_b = at(params.head_b);
    return bm;
}

Tape::Var rp_forward(Tape& tape, Tape::Var input, const BoundRep& rep) {
    if (!rep.has_rp) return input;
    const int m = tape.value(input).dim(0);
    const int d_h = tape.value(rep.U).dim(1);

    // x_i U batched once; the scan itself only carries the d_h-wide state.
    Tape::Var xu = tape.matmul(input, rep.U);
    Tape::Var h = tape.input(Tensor({1, d_h}));  // h_0 = 0
    std::vector<Tape::Var> states;
    states.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        Tape::Var pre = tape.add(tape.add(tape.gather_rows(xu, {i}), tape.matmul(h, rep.W)),
                                 rep.b_hl1);
        h = tape.sigmoid(pre);
        states.push_back(h);
    }
    Tape::Var hs = tape.concat_rows(states);
    Tape::Var hidden = tape.sigmoid(tape.add(tape.matmul(hs, rep.V), rep.b_hl2));
    return tape.sigmoid(tape.add(tape.matmul(hidden, rep.W_hl2), rep.b));
}

namespace {

Tape::Var ffn2_forward(Tape& tape, Tape::Var x, const BoundFfnPair& f) {
    Tape::Var hidden = tape.relu(tape.add(tape.matmul(x, f.w1), f.b1));
    return tape.add(tape.matmul(hidden, f.w2), f.b2);
}

}  // namespace

Tape::Var channel_attention(Tape& tape, Tape::Var y_rp, int window, const BoundRep& rep) {
    const Tensor& v = tape.value(y_rp);
    if (v.ndim() != 2) throw ShapeError("channel attention expects a 2-axis input");
    if (!rep.has_ca) {
        const double u = 1.0 / static_cast<double>(v.dim(1));
        return tape.input(Tensor::full({v.dim(0), v.dim(1)}, u));
    }
    Tape::Var pid = to_pid(tape, y_rp, window);
    Tape::Var h_max = tape.pool_spatial(pid, Pool::Max);
    Tape::Var h_avg = tape.pool_spatial(pid, Pool::Avg);
    Tape::Var h1 = ffn2_forward(tape, h_max, rep.ffn_max);
    Tape::Var h2 = ffn2_forward(tape, h_avg, rep.ffn_avg);
    return tape.softmax_lastaxis(tape.sigmoid(tape.add(h1, h2)));
}

Tape::Var ffm_forward(Tape& tape, Tape::Var y_rp_weighted, const BoundFfn3& ffn3) {
    Tape::Var a = tape.sigmoid(tape.add(tape.matmul(y_rp_weighted, ffn3.w1), ffn3.b1));
    Tape::Var b = tape.sigmoid(tape.add(tape.matmul(a, ffn3.w2), ffn3.b2));
    return tape.sigmoid(tape.add(tape.matmul(b, ffn3.w3), ffn3.b3));
}

Tape::Var predict_head(Tape& tape, Tape::Var y_ffm, Tape::Var head_w, Tape::Var head_b) {
    return tape.add(tape.matmul(y_ffm, head_w), head_b);
}

ForwardResult model_forward(Tape& tape, Tape::Var psd, const BoundModel& bound,
                            const ModelParams& params) {
    const Tensor& v = tape.value(psd);
    if (v.ndim() != 2 || v.dim(1) != params.n_features) {
        std::ostringstream os;
        os << "model expects m x " << params.n_features << " input, got "
           << shape_string(v.shape());
        throw ShapeError(os.str());
    }
    if (v.dim(0) < params.hp.window) {
        std::ostringstream os;
        os << "batch of " << v.dim(0) << " rows is smaller than the window w="
           << params.hp.window;
        throw ShapeError(os.str());
    }

    ForwardResult out;
    Tape::Var current = psd;
    Tape::Var y_ffm{};
    for (int r = 0; r < params.hp.repetitions; ++r) {
        if (r > 0) {
            current = params.hp.residual == ResidualMode::Literal
                          ? tape.add(current, psd)
                          : tape.add(y_ffm, psd);
        }
        const BoundRep& rep = bound.reps[static_cast<std::size_t>(r)];
        Tape::Var y_rp = rp_forward(tape, current, rep);
        Tape::Var attention = channel_attention(tape, y_rp, params.hp.window, rep);
        out.attentions.push_back(attention);
        y_ffm = ffm_forward(tape, tape.hadamard(y_rp, attention), rep.ffn3);
    }
    out.prediction = predict_head(tape, y_ffm, bound.head_w, bound.head_b);
    return out;
}

EvalOutput evaluate_model(const ModelParams& params, const Dataset& d,
                          const MinMaxScaler* scaler) {
    if (d.n() != params.n_features) {
        std::ostringstream os;
        os << "model was trained on " << params.n_features << " features, dataset has "
           << d.n();
        throw ShapeError(os.str());
    }
    Dataset scaled = d;
    if (scaler != nullptr) scaled.features = scaler->apply(d.features);

    PsdView view = to_psd(scaled, params.hp.x_prime);
    Tape tape;
    BoundModel bound = bind_params(tape, params, /*trainable=*/false);
    Tape::Var psd = tape.input(view.sorted_features);
    ForwardResult fwd = model_forward(tape, psd, bound, params);

    EvalOutput out;
    out.corrections = unsort_predictions(tape.value(fwd.prediction), view);
    out.attentions.reserve(fwd.attentions.size());
    for (Tape::Var a : fwd.attentions)
        out.attentions.push_back(unsort_rows(tape.value(a), view));
    return out;
}

}  // namespace rpcate
