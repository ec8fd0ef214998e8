#include "doctest.h"

#include <cmath>

#include "gradcheck.hpp"
#include "helpers.hpp"
#include "rpcate/model.hpp"
#include "rpcate/training.hpp"

using namespace rpcate;
using namespace rpcate::testing;

namespace {

double sigma(double x) { return 1.0 / (1.0 + std::exp(-x)); }

HyperParams small_hp(int w, int reps) {
    HyperParams hp;
    hp.window = w;
    hp.repetitions = reps;
    hp.epochs = 1;
    return hp;
}

/// Full loss at the current parameter values; rebuilt per call.
double loss_at(ModelParams& params, const PsdView& view, const Tensor& targets,
               double lambda) {
    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var psd = tape.input(view.sorted_features);
    Tape::Var y = tape.input(targets);
    ForwardResult fwd = model_forward(tape, psd, bound, params);
    Tape::Var loss = loss_op(tape, fwd.prediction, y, bound.trainable, lambda,
                             params.hp.squared_norm);
    return tape.value(loss)[0];
}

std::vector<Tensor> grads_at(ModelParams& params, const PsdView& view, const Tensor& targets,
                             double lambda) {
    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var psd = tape.input(view.sorted_features);
    Tape::Var y = tape.input(targets);
    ForwardResult fwd = model_forward(tape, psd, bound, params);
    Tape::Var loss = loss_op(tape, fwd.prediction, y, bound.trainable, lambda,
                             params.hp.squared_norm);
    tape.backward(loss);
    std::vector<Tensor> out;
    for (Tape::Var v : bound.trainable) out.push_back(tape.grad(v));
    return out;
}

void run_model_gradcheck(ModelParams& params, const Dataset& d, double lambda,
                         double rel_tol) {
    PsdView view = to_psd(d, params.hp.x_prime);
    Tensor targets = Tensor::column(view.sorted_targets);
    auto result = gradient_check(
        params, [&] { return loss_at(params, view, targets, lambda); },
        [&] { return grads_at(params, view, targets, lambda); });
    INFO("worst at ", result.worst_where, ", rel ", result.worst_rel, ", abs ",
         result.worst_abs);
    CHECK(result.worst_rel <= rel_tol);
    CHECK(result.worst_abs <= 1e-7);
}

}  // namespace

TEST_CASE("hyperparams resolve defaults and enforce width constraints") {
    HyperParams hp;
    HyperParams r = hp.resolved(3);
    CHECK(r.d_h == 12);
    CHECK(r.d_m == 12);
    CHECK(r.n1 == 6);
    CHECK(r.n2 == 6);
    CHECK(r.n3 == 6);
    CHECK(r.n4 == 6);

    HyperParams bad = hp;
    bad.window = 8;
    CHECK_THROWS_AS((void)bad.resolved(3), std::invalid_argument);

    bad = hp;
    bad.n1 = 3;  // must exceed n
    bad.n2 = 3;
    CHECK_THROWS_AS((void)bad.resolved(3), std::invalid_argument);

    bad = hp;
    bad.n1 = 7;
    bad.n2 = 8;  // must equal n1
    CHECK_THROWS_AS((void)bad.resolved(3), std::invalid_argument);

    bad = hp;
    bad.n3 = 2;
    CHECK_THROWS_AS((void)bad.resolved(3), std::invalid_argument);

    bad = hp;
    bad.repetitions = 0;
    CHECK_THROWS_AS((void)bad.resolved(3), std::invalid_argument);

    bad = hp;
    bad.x_prime = 3;
    CHECK_THROWS_AS((void)bad.resolved(3), std::invalid_argument);
}

TEST_CASE("init is seeded, biases start at zero, ablations drop their blocks") {
    HyperParams hp = small_hp(9, 2);
    ModelParams a = ModelParams::init(3, hp);
    ModelParams b = ModelParams::init(3, hp);
    auto ta = a.trainable();
    auto tb = b.trainable();
    REQUIRE(ta.size() == tb.size());
    for (std::size_t i = 0; i < ta.size(); ++i)
        for (std::size_t k = 0; k < ta[i]->size(); ++k)
            CHECK((*ta[i])[k] == (*tb[i])[k]);

    hp.seed = 99;
    ModelParams c = ModelParams::init(3, hp);
    bool differs = false;
    auto tc = c.trainable();
    for (std::size_t i = 0; i < ta.size() && !differs; ++i)
        for (std::size_t k = 0; k < ta[i]->size() && !differs; ++k)
            if ((*ta[i])[k] != (*tc[i])[k]) differs = true;
    CHECK(differs);

    for (const auto& rep : a.reps) {
        REQUIRE(rep.rp.has_value());
        for (double v : rep.rp->b_hl1.data()) CHECK(v == 0.0);
        for (double v : rep.rp->b_hl2.data()) CHECK(v == 0.0);
        for (double v : rep.rp->b.data()) CHECK(v == 0.0);
        REQUIRE(rep.ffn_max.has_value());
        for (double v : rep.ffn_max->b1.data()) CHECK(v == 0.0);
        for (double v : rep.ffn3.b3.data()) CHECK(v == 0.0);
    }
    for (double v : a.head_b.data()) CHECK(v == 0.0);

    ModelParams no_rp = ModelParams::init(3, hp, Ablation::NoRp);
    for (const auto& rep : no_rp.reps) {
        CHECK(!rep.rp.has_value());
        CHECK(rep.ffn_max.has_value());
    }
    ModelParams no_ca = ModelParams::init(3, hp, Ablation::NoCa);
    for (const auto& rep : no_ca.reps) {
        CHECK(rep.rp.has_value());
        CHECK(!rep.ffn_max.has_value());
    }

    CHECK(a.stored_reps() == 2);
    hp.share_params = true;
    ModelParams shared = ModelParams::init(3, hp);
    CHECK(shared.stored_reps() == 1);
    CHECK(&shared.rep(0) == &shared.rep(1));
}

TEST_CASE("rp_forward: zero parameters give 0.5 everywhere") {
    HyperParams hp = small_hp(1, 1);
    ModelParams params = ModelParams::init(2, hp);
    for (Tensor* t : params.trainable())
        for (double& v : t->data()) v = 0.0;

    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var x = tape.input(Tensor::matrix(3, 2, {0.1, 0.9, -2.0, 4.0, 0.0, 0.5}));
    Tape::Var y = rp_forward(tape, x, bound.reps[0]);
    for (double v : tape.value(y).data()) CHECK(v == 0.5);
}

TEST_CASE("rp_forward: single step reduces to sigma(b) when only b is set") {
    HyperParams hp = small_hp(1, 1);
    hp.d_h = 1;
    hp.d_m = 1;
    ModelParams params = ModelParams::init(1, hp);
    for (Tensor* t : params.trainable())
        for (double& v : t->data()) v = 0.0;
    const double logit = 1.3862943611198906;  // log(4): sigma gives 0.8
    params.reps[0].rp->b[0] = logit;

    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var x = tape.input(Tensor::matrix(1, 1, {0.42}));
    Tape::Var y = rp_forward(tape, x, bound.reps[0]);
    CHECK(tape.value(y)[0] == doctest::Approx(sigma(logit)).epsilon(1e-15));
    CHECK(tape.value(y)[0] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("rp_forward: two-step scalar chain matches the hand unroll") {
    HyperParams hp = small_hp(1, 1);
    hp.d_h = 1;
    hp.d_m = 1;
    ModelParams params = ModelParams::init(1, hp);
    for (Tensor* t : params.trainable())
        for (double& v : t->data()) v = 0.0;
    params.reps[0].rp->U[0] = 1.0;
    params.reps[0].rp->W[0] = 1.0;
    params.reps[0].rp->V[0] = 1.0;
    params.reps[0].rp->W_hl2[0] = 1.0;

    const double x1 = 0.2, x2 = 0.7;
    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var x = tape.input(Tensor::matrix(2, 1, {x1, x2}));
    Tape::Var y = rp_forward(tape, x, bound.reps[0]);

    double h1 = sigma(x1);              // h0 = 0
    double h2 = sigma(x2 + h1);
    double y1 = sigma(sigma(h1));
    double y2 = sigma(sigma(h2));
    CHECK(tape.value(y).at(0, 0) == doctest::Approx(y1).epsilon(1e-15));
    CHECK(tape.value(y).at(1, 0) == doctest::Approx(y2).epsilon(1e-15));
}

TEST_CASE("channel attention: zero parameters yield exactly 1/n") {
    HyperParams hp = small_hp(4, 1);
    ModelParams params = ModelParams::init(3, hp);
    for (Tensor* t : params.trainable())
        for (double& v : t->data()) v = 0.0;

    Dataset d = make_random_dataset(8, 3, 5);
    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var x = tape.input(d.features);
    Tape::Var att = channel_attention(tape, x, 4, bound.reps[0]);
    const Tensor& a = tape.value(att);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == 1.0 / 3.0);
}

TEST_CASE("channel attention rows are normalized and strictly inside (0,1)") {
    HyperParams hp = small_hp(9, 1);
    ModelParams params = ModelParams::init(4, hp);
    randomize_params(params, 17, 1.0);

    Dataset d = make_random_dataset(20, 4, 23);
    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var x = tape.input(d.features);
    Tape::Var att = channel_attention(tape, x, 9, bound.reps[0]);
    const Tensor& a = tape.value(att);
    for (int i = 0; i < a.dim(0); ++i) {
        double sum = 0.0;
        for (int j = 0; j < a.dim(1); ++j) {
            double v = a.at(i, j);
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            sum += v;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("model_forward enforces the window precondition") {
    HyperParams hp = small_hp(25, 1);
    ModelParams params = ModelParams::init(3, hp);
    Dataset d = make_random_dataset(10, 3, 3);  // 10 < 25
    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var psd = tape.input(d.features);
    CHECK_THROWS_AS((void)model_forward(tape, psd, bound, params), ShapeError);
}

TEST_CASE("model_forward: N=2 equals manual composition through the repetition blocks") {
    HyperParams hp = small_hp(4, 2);
    ModelParams params = ModelParams::init(3, hp);
    randomize_params(params, 7);

    Dataset d = make_random_dataset(9, 3, 11);
    PsdView view = to_psd(d, 0);

    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var psd = tape.input(view.sorted_features);
    ForwardResult fwd = model_forward(tape, psd, bound, params);

    // Same blocks, composed by hand: repetition 2 must consume y_FFM(1) + I.
    Tape manual;
    BoundModel mb = bind_params(manual, params);
    Tape::Var mpsd = manual.input(view.sorted_features);
    Tape::Var y_rp1 = rp_forward(manual, mpsd, mb.reps[0]);
    Tape::Var att1 = channel_attention(manual, y_rp1, 4, mb.reps[0]);
    Tape::Var y_ffm1 = ffm_forward(manual, manual.hadamard(y_rp1, att1), mb.reps[0].ffn3);
    Tape::Var in2 = manual.add(y_ffm1, mpsd);
    Tape::Var y_rp2 = rp_forward(manual, in2, mb.reps[1]);
    Tape::Var att2 = channel_attention(manual, y_rp2, 4, mb.reps[1]);
    Tape::Var y_ffm2 = ffm_forward(manual, manual.hadamard(y_rp2, att2), mb.reps[1].ffn3);
    Tape::Var pred = predict_head(manual, y_ffm2, mb.head_w, mb.head_b);

    const Tensor& expect = manual.value(pred);
    const Tensor& got = tape.value(fwd.prediction);
    REQUIRE(got.same_shape(expect));
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);

    const Tensor& a1 = tape.value(fwd.attentions[0]);
    const Tensor& ma1 = manual.value(att1);
    for (std::size_t i = 0; i < a1.size(); ++i) CHECK(a1[i] == ma1[i]);
}

TEST_CASE("literal residual mode accumulates the initial input instead of y_FFM") {
    HyperParams hp = small_hp(4, 2);
    hp.residual = ResidualMode::Literal;
    ModelParams params = ModelParams::init(2, hp);
    randomize_params(params, 19);

    Dataset d = make_random_dataset(8, 2, 29);
    PsdView view = to_psd(d, 0);

    Tape tape;
    BoundModel bound = bind_params(tape, params);
    Tape::Var psd = tape.input(view.sorted_features);
    ForwardResult fwd = model_forward(tape, psd, bound, params);

    Tape manual;
    BoundModel mb = bind_params(manual, params);
    Tape::Var mpsd = manual.input(view.sorted_features);
    // Repetition 2 sees I + I under the literal Algorithm-1 reading.
    Tape::Var in2 = manual.add(mpsd, mpsd);
    Tape::Var y_rp2 = rp_forward(manual, in2, mb.reps[1]);
    Tape::Var att2 = channel_attention(manual, y_rp2, 4, mb.reps[1]);
    Tape::Var y_ffm2 = ffm_forward(manual, manual.hadamard(y_rp2, att2), mb.reps[1].ffn3);
    Tape::Var pred = predict_head(manual, y_ffm2, mb.head_w, mb.head_b);

    const Tensor& expect = manual.value(pred);
    const Tensor& got = tape.value(fwd.prediction);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);
}

TEST_CASE("no_rp leaves the input untouched, no_ca weights uniformly") {
    HyperParams hp = small_hp(4, 1);
    ModelParams no_rp = ModelParams::init(3, hp, Ablation::NoRp);
    randomize_params(no_rp, 31);
    Dataset d = make_random_dataset(9, 3, 37);

    Tape tape;
    BoundModel bound = bind_params(tape, no_rp);
    Tape::Var x = tape.input(d.features);
    Tape::Var y = rp_forward(tape, x, bound.reps[0]);
    CHECK(y.id == x.id);  // identity map, not a copy

    ModelParams no_ca = ModelParams::init(3, hp, Ablation::NoCa);
    randomize_params(no_ca, 41);
    Tape tape2;
    BoundModel bound2 = bind_params(tape2, no_ca);
    Tape::Var x2 = tape2.input(d.features);
    Tape::Var att = channel_attention(tape2, x2, 4, bound2.reps[0]);
    for (double v : tape2.value(att).data()) CHECK(v == 1.0 / 3.0);
}

TEST_CASE("evaluate_model is invariant to row shuffling (distinct sort values)") {
    HyperParams hp = small_hp(9, 2);
    ModelParams params = ModelParams::init(3, hp);
    randomize_params(params, 43);

    Dataset d = make_random_dataset(15, 3, 47);
    EvalOutput base = evaluate_model(params, d);

    std::vector<int> shuffle = {7, 2, 9, 0, 14, 3, 11, 5, 1, 13, 8, 4, 12, 6, 10};
    Dataset shuffled = d;
    for (int i = 0; i < d.m(); ++i) {
        int src = shuffle[static_cast<std::size_t>(i)];
        for (int j = 0; j < d.n(); ++j)
            shuffled.features.at(i, j) = d.features.at(src, j);
        shuffled.y_true[static_cast<std::size_t>(i)] = d.y_true[static_cast<std::size_t>(src)];
        shuffled.y_me[static_cast<std::size_t>(i)] = d.y_me[static_cast<std::size_t>(src)];
        shuffled.y[static_cast<std::size_t>(i)] = d.y[static_cast<std::size_t>(src)];
    }
    EvalOutput moved = evaluate_model(params, shuffled);
    for (int i = 0; i < d.m(); ++i) {
        int src = shuffle[static_cast<std::size_t>(i)];
        CHECK(moved.corrections.at(i, 0) == base.corrections.at(src, 0));
        for (int j = 0; j < d.n(); ++j)
            CHECK(moved.attentions[0].at(i, j) == base.attentions[0].at(src, j));
    }
}

TEST_CASE("gradient check: full model at the reference configuration") {
    HyperParams hp;
    hp.window = 9;
    hp.repetitions = 2;
    hp.d_h = 4;
    hp.d_m = 4;
    ModelParams params = ModelParams::init(3, hp);
    randomize_params(params, 101);

    Dataset d = make_random_dataset(12, 3, 103);
    run_model_gradcheck(params, d, 1e-3, 1e-4);
}

TEST_CASE("gradient check: literal residual, shared parameters, ablations") {
    Dataset d = make_random_dataset(9, 2, 107);

    HyperParams hp;
    hp.window = 4;
    hp.repetitions = 2;
    hp.d_h = 3;
    hp.d_m = 3;

    SUBCASE("literal residual") {
        hp.residual = ResidualMode::Literal;
        ModelParams params = ModelParams::init(2, hp);
        randomize_params(params, 109);
        run_model_gradcheck(params, d, 1e-3, 1e-4);
    }
    SUBCASE("shared parameters") {
        hp.share_params = true;
        ModelParams params = ModelParams::init(2, hp);
        randomize_params(params, 113);
        run_model_gradcheck(params, d, 1e-3, 1e-4);
    }
    SUBCASE("no_rp") {
        ModelParams params = ModelParams::init(2, hp, Ablation::NoRp);
        randomize_params(params, 127);
        run_model_gradcheck(params, d, 1e-3, 1e-4);
    }
    SUBCASE("no_ca") {
        ModelParams params = ModelParams::init(2, hp, Ablation::NoCa);
        randomize_params(params, 131);
        run_model_gradcheck(params, d, 1e-3, 1e-4);
    }
    SUBCASE("squared regularizer") {
        hp.squared_norm = true;
        ModelParams params = ModelParams::init(2, hp);
        randomize_params(params, 137);
        run_model_gradcheck(params, d, 1e-3, 1e-4);
    }
}
