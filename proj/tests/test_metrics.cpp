#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "rpcate/metrics.hpp"

using namespace rpcate;
using rpcate::testing::make_random_dataset;
using rpcate::testing::TempDir;
using rpcate::testing::uniform;

namespace {

Dataset tiny_dataset(std::vector<double> y_true, std::vector<double> y_me) {
    Dataset d;
    int m = static_cast<int>(y_true.size());
    d.feature_names = {"x0"};
    d.features = Tensor({m, 1});
    for (int i = 0; i < m; ++i) d.features.at(i, 0) = i;
    d.y_true = std::move(y_true);
    d.y_me = std::move(y_me);
    d.y.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) d.y[i] = d.y_true[i] - d.y_me[i];
    return d;
}

}  // namespace

TEST_CASE("relative errors") {
    SUBCASE("perfect hybrid gives zeros") {
        std::vector<double> y_true{2, 3, 4}, y_me{1.5, 3.5, 4.25};
        std::vector<double> c{0.5, -0.5, -0.25};
        RelativeErrors r = relative_errors(c, y_me, y_true);
        for (int i = 0; i < 3; ++i) {
            CHECK(r.valid[i]);
            CHECK(r.percent[i] == 0.0);
        }
        CHECK(r.below_1 == 3);
        CHECK(r.above_5 == 0);
        CHECK(r.mean_percent == 0.0);
    }
    SUBCASE("1.01 against 1.00 is one percent") {
        std::vector<double> y_true{1.0}, y_me{1.0}, c{0.01};
        RelativeErrors r = relative_errors(c, y_me, y_true);
        CHECK(r.percent[0] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("strict boundaries at 1 and 5 percent") {
        // 1/100 and 5/100 land exactly on the thresholds in doubles
        std::vector<double> y_true{100, 100, 100}, y_me{100, 100, 100};
        std::vector<double> c{1.0, 5.0, 0.5};
        RelativeErrors r = relative_errors(c, y_me, y_true);
        CHECK(r.percent[0] == 1.0);
        CHECK(r.percent[1] == 5.0);
        CHECK(r.below_1 == 1);
        CHECK(r.above_5 == 0);
    }
    SUBCASE("zero y_true rows are excluded and counted") {
        std::vector<double> y_true{0.0, 2.0}, y_me{0.5, 1.0}, c{0.0, 1.1};
        RelativeErrors r = relative_errors(c, y_me, y_true);
        CHECK(r.excluded == 1);
        CHECK(!r.valid[0]);
        CHECK(r.valid[1]);
        CHECK(r.mean_percent == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("random instance matches direct recomputation") {
        std::mt19937_64 rng(21);
        Dataset d = make_random_dataset(40, 2, 77);
        std::vector<double> c(40);
        for (double& v : c) v = uniform(rng, -0.3, 0.3);
        RelativeErrors r = relative_errors(c, d.y_me, d.y_true);
        double sum = 0.0;
        for (int i = 0; i < 40; ++i) {
            double expect = std::abs(c[i] + d.y_me[i] - d.y_true[i]) / std::abs(d.y_true[i]) * 100;
            CHECK(r.percent[i] == expect);
            sum += expect;
        }
        CHECK(r.mean_percent == doctest::Approx(sum / 40).epsilon(1e-12));
    }
    SUBCASE("length mismatch rejected") {
        std::vector<double> a{1, 2}, b{1};
        CHECK_THROWS_AS(relative_errors(a, a, b), ShapeError);
    }
}

TEST_CASE("mir identities") {
    // mechanistic errors 20%, 5%, 10%, 10%: no sample below 1%
    std::vector<double> y_true{1, 2, 3, 4}, y_me{1.2, 1.9, 3.3, 3.6};

    SUBCASE("zero corrections give exactly 0") {
        std::vector<double> zero(4, 0.0);
        CHECK(mir_percent(zero, y_me, y_true) == 0.0);
    }
    SUBCASE("perfect corrections give exactly 100") {
        std::vector<double> perfect(4);
        for (int i = 0; i < 4; ++i) perfect[i] = y_true[i] - y_me[i];
        CHECK(mir_percent(perfect, y_me, y_true) == 100.0);
    }
    SUBCASE("undefined when the baseline is exact") {
        std::vector<double> zero(2, 0.0), same{5.0, 6.0};
        CHECK_THROWS_AS(mir_percent(zero, same, same), MetricsError);
    }
    SUBCASE("undefined when the baseline is already below 1% everywhere") {
        std::vector<double> t{100.0, 200.0}, me{100.1, 200.1}, zero(2, 0.0);
        CHECK_THROWS_AS(mir_percent(zero, me, t), MetricsError);
    }
}

TEST_CASE("four-sample hand oracle") {
    Dataset d = tiny_dataset({2.0, 1.0, 4.0, 8.0}, {1.875, 1.02, 4.5, 8.0});
    // residuals y = (0.125, -0.02, -0.5, 0)
    Tensor c = Tensor::column({0.1, -0.04, -0.25, 0.25});
    auto [mech, hybrid] = full_report(c, d);

    // mechanistic: errors (6.25%, 2%, 12.5%, 0%)
    CHECK(mech.samples == 4);
    CHECK(mech.mae == doctest::Approx(0.16125).epsilon(1e-12));
    CHECK(mech.rmse == doctest::Approx(std::sqrt(0.06650625)).epsilon(1e-12));
    CHECK(mech.are_percent == doctest::Approx(5.1875).epsilon(1e-12));
    CHECK(mech.err_lt_1pct == 1);
    CHECK(mech.err_gt_5pct == 2);
    CHECK(mech.are_excluded == 0);
    CHECK(mech.mir_percent == 0.0);

    // hybrid: residual errors (-0.025, -0.02, 0.25, 0.25),
    // relative errors (1.25%, 2%, 6.25%, 3.125%)
    CHECK(hybrid.samples == 4);
    CHECK(hybrid.mae == doctest::Approx(0.13625).epsilon(1e-12));
    CHECK(hybrid.rmse == doctest::Approx(0.1775).epsilon(1e-12));
    CHECK(hybrid.are_percent == doctest::Approx(3.15625).epsilon(1e-12));
    CHECK(hybrid.err_lt_1pct == 0);
    CHECK(hybrid.err_gt_5pct == 1);
    double expected_mir = 100.0 * (0.5 * (1.0 - 0.545 / 0.645) + 0.5 * (-1.0 / 3.0));
    CHECK(hybrid.mir_percent == doctest::Approx(expected_mir).epsilon(1e-12));

    SUBCASE("zero corrections reproduce the residual mean") {
        Tensor zeros({4, 1});
        auto [mech2, hybrid2] = full_report(zeros, d);
        CHECK(hybrid2.mae == mech2.mae);
        CHECK(hybrid2.mir_percent == 0.0);
    }
    SUBCASE("report serialization carries every field") {
        auto j = report_to_json(hybrid);
        CHECK(j["variant"] == "hybrid");
        CHECK(j["samples"] == 4);
        CHECK(j.contains("mae"));
        CHECK(j.contains("rmse"));
        CHECK(j.contains("are_percent"));
        CHECK(j.contains("err_lt_1pct"));
        CHECK(j.contains("err_gt_5pct"));
        CHECK(j.contains("mir_percent"));
    }
}

TEST_CASE("report properties on random data") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Dataset d = make_random_dataset(30, 3, 500 + seed);
        std::mt19937_64 rng(900 + seed);
        Tensor c({30, 1});
        for (double& v : c.data()) v = uniform(rng, -0.5, 0.5);
        auto [mech, hybrid] = full_report(c, d);

        CHECK(mech.mae <= mech.rmse + 1e-15);
        CHECK(hybrid.mae <= hybrid.rmse + 1e-15);

        // exhaustive partition of the valid rows
        RelativeErrors rel = relative_errors(c.data(), d.y_me, d.y_true);
        int between = 0;
        for (int i = 0; i < 30; ++i)
            if (rel.valid[i] && rel.percent[i] >= 1.0 && rel.percent[i] <= 5.0) ++between;
        CHECK(rel.below_1 + between + rel.above_5 + rel.excluded == 30);
        CHECK(hybrid.err_lt_1pct == rel.below_1);
        CHECK(hybrid.err_gt_5pct == rel.above_5);
    }
}

TEST_CASE("full_report is order-invariant") {
    Dataset d = make_random_dataset(25, 3, 321);
    std::mt19937_64 rng(654);
    Tensor c({25, 1});
    for (double& v : c.data()) v = uniform(rng, -0.4, 0.4);
    auto [mech, hybrid] = full_report(c, d);

    std::vector<int> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);

    Dataset shuffled = d;
    Tensor c2({25, 1});
    for (int i = 0; i < 25; ++i) {
        int src = perm[i];
        for (int j = 0; j < 3; ++j) shuffled.features.at(i, j) = d.features.at(src, j);
        shuffled.y_true[i] = d.y_true[src];
        shuffled.y_me[i] = d.y_me[src];
        shuffled.y[i] = d.y[src];
        c2.at(i, 0) = c.at(src, 0);
    }
    auto [mech2, hybrid2] = full_report(c2, shuffled);

    CHECK(mech2.mae == doctest::Approx(mech.mae).epsilon(1e-12));
    CHECK(mech2.rmse == doctest::Approx(mech.rmse).epsilon(1e-12));
    CHECK(mech2.are_percent == doctest::Approx(mech.are_percent).epsilon(1e-12));
    CHECK(mech2.err_lt_1pct == mech.err_lt_1pct);
    CHECK(mech2.err_gt_5pct == mech.err_gt_5pct);
    CHECK(hybrid2.mae == doctest::Approx(hybrid.mae).epsilon(1e-12));
    CHECK(hybrid2.rmse == doctest::Approx(hybrid.rmse).epsilon(1e-12));
    CHECK(hybrid2.are_percent == doctest::Approx(hybrid.are_percent).epsilon(1e-12));
    CHECK(hybrid2.err_lt_1pct == hybrid.err_lt_1pct);
    CHECK(hybrid2.err_gt_5pct == hybrid.err_gt_5pct);
    CHECK(hybrid2.mir_percent == doctest::Approx(hybrid.mir_percent).epsilon(1e-12));
}

TEST_CASE("attention export") {
    TempDir dir("attn");
    std::vector<std::string> names{"x0", "x1", "x2"};

    SUBCASE("uniform map exports 1/n everywhere") {
        Tensor map = Tensor::full({7, 3}, 1.0 / 3.0);
        auto out = export_attention({map}, names, dir.path());
        REQUIRE(out.csv_paths.size() == 1);
        REQUIRE(out.svg_paths.size() == 1);
        CHECK(out.csv_paths[0].filename() == "attention_N1.csv");

        std::ifstream in(out.csv_paths[0]);
        std::string header;
        std::getline(in, header);
        CHECK(header == "feature,s0,s1,s2,s3,s4,s5,s6,average");
        int rows = 0;
        std::string line;
        while (std::getline(in, line)) {
            ++rows;
            auto last = line.rfind(',');
            double avg = std::stod(line.substr(last + 1));
            CHECK(avg == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
        }
        CHECK(rows == 3);

        std::ifstream svg(out.svg_paths[0]);
        std::stringstream buf;
        buf << svg.rdbuf();
        CHECK(buf.str().find("<svg") != std::string::npos);
    }
    SUBCASE("one file pair per repetition") {
        Tensor m1 = Tensor::full({4, 3}, 1.0 / 3.0);
        Tensor m2({4, 3});
        for (int i = 0; i < 4; ++i) {
            m2.at(i, 0) = 0.5;
            m2.at(i, 1) = 0.3;
            m2.at(i, 2) = 0.2;
        }
        auto out = export_attention({m1, m2}, names, dir.path());
        CHECK(out.csv_paths.size() == 2);
        CHECK(out.csv_paths[1].filename() == "attention_N2.csv");
        CHECK(std::filesystem::exists(out.svg_paths[1]));
    }
    SUBCASE("rows must sum to one") {
        Tensor bad = Tensor::full({2, 3}, 0.4);
        CHECK_THROWS_AS(export_attention({bad}, names, dir.path()), MetricsError);
    }
    SUBCASE("feature names must match the width") {
        Tensor map = Tensor::full({2, 2}, 0.5);
        CHECK_THROWS_AS(export_attention({map}, names, dir.path()), ShapeError);
    }
}
