#include "rpcate/metrics.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "rpcate/svg.hpp"

namespace rpcate {

using nlohmann::json;

namespace {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void check_batch(std::size_t a, std::size_t b, std::size_t c) {
    if (a != b || b != c)
        throw ShapeError("corrections, y_me and y_true must have equal lengths");
    if (a == 0) throw ShapeError("metrics need at least one sample");
}

}  // namespace

json report_to_json(const MetricsReport& r) {
    json j;
    j["variant"] = r.variant;
    j["samples"] = r.samples;
    j["mae"] = r.mae;
    j["rmse"] = r.rmse;
    j["are_percent"] = r.are_percent;
    j["err_lt_1pct"] = r.err_lt_1pct;
    j["err_gt_5pct"] = r.err_gt_5pct;
    j["are_excluded"] = r.are_excluded;
    j["mir_percent"] = r.mir_percent;
    return j;
}

RelativeErrors relative_errors(std::span<const double> corrections,
                               std::span<const double> y_me,
                               std::span<const double> y_true) {
    check_batch(corrections.size(), y_me.size(), y_true.size());
    RelativeErrors out;
    const std::size_t m = corrections.size();
    out.percent.assign(m, 0.0);
    out.valid.assign(m, false);
    double sum = 0.0;
    int valid_count = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (y_true[i] == 0.0) {
            ++out.excluded;
            continue;
        }
        double e = std::abs(corrections[i] + y_me[i] - y_true[i]) / std::abs(y_true[i]) * 100.0;
        out.percent[i] = e;
        out.valid[i] = true;
        if (e < 1.0) ++out.below_1;
        if (e > 5.0) ++out.above_5;
        sum += e;
        ++valid_count;
    }
    out.mean_percent = valid_count > 0 ? sum / valid_count : 0.0;
    return out;
}

double mir_percent(std::span<const double> corrections, std::span<const double> y_me,
                   std::span<const double> y_true) {
    check_batch(corrections.size(), y_me.size(), y_true.size());
    const std::size_t m = corrections.size();

    double hybrid_sum = 0.0, mech_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        hybrid_sum += std::abs(corrections[i] + y_me[i] - y_true[i]);
        mech_sum += std::abs(y_me[i] - y_true[i]);
    }
    if (mech_sum == 0.0)
        throw MetricsError("MIR is undefined: the mechanistic model has zero total error");

    std::vector<double> zeros(m, 0.0);
    RelativeErrors hybrid = relative_errors(corrections, y_me, y_true);
    RelativeErrors mech = relative_errors(zeros, y_me, y_true);
    if (mech.below_1 == static_cast<int>(m))
        throw MetricsError(
            "MIR is undefined: the mechanistic model is already below 1% error everywhere");

    double term1 = 1.0 - hybrid_sum / mech_sum;
    double term2 = static_cast<double>(hybrid.below_1 - mech.below_1) /
                   static_cast<double>(static_cast<int>(m) - mech.below_1);
    return (0.5 * term1 + 0.5 * term2) * 100.0;
}

std::pair<MetricsReport, MetricsReport> full_report(const Tensor& corrections,
                                                    const Dataset& d) {
    if (corrections.ndim() != 2 || corrections.dim(1) != 1 || corrections.dim(0) != d.m())
        throw ShapeError("corrections must be an m x 1 column matching the dataset");
    const int m = d.m();
    std::span<const double> c = corrections.data();

    auto residual_errors = [&](bool zero_corrections) {
        double abs_sum = 0.0, sq_sum = 0.0;
        for (int i = 0; i < m; ++i) {
            double e = (zero_corrections ? 0.0 : c[static_cast<std::size_t>(i)]) -
                       d.y[static_cast<std::size_t>(i)];
            abs_sum += std::abs(e);
            sq_sum += e * e;
        }
        return std::pair<double, double>{abs_sum / m, std::sqrt(sq_sum / m)};
    };

    std::vector<double> zeros(static_cast<std::size_t>(m), 0.0);

    MetricsReport mech;
    mech.variant = "mechanistic";
    mech.samples = m;
    std::tie(mech.mae, mech.rmse) = residual_errors(true);
    RelativeErrors mech_rel = relative_errors(zeros, d.y_me, d.y_true);
    mech.are_percent = mech_rel.mean_percent;
    mech.err_lt_1pct = mech_rel.below_1;
    mech.err_gt_5pct = mech_rel.above_5;
    mech.are_excluded = mech_rel.excluded;
    mech.mir_percent = 0.0;  // by definition

    MetricsReport hybrid;
    hybrid.variant = "hybrid";
    hybrid.samples = m;
    std::tie(hybrid.mae, hybrid.rmse) = residual_errors(false);
    RelativeErrors rel = relative_errors(c, d.y_me, d.y_true);
    hybrid.are_percent = rel.mean_percent;
    hybrid.err_lt_1pct = rel.below_1;
    hybrid.err_gt_5pct = rel.above_5;
    hybrid.are_excluded = rel.excluded;
    hybrid.mir_percent = mir_percent(c, d.y_me, d.y_true);

    return {mech, hybrid};
}

AttentionExport export_attention(const std::vector<Tensor>& attention_maps,
                                 const std::vector<std::string>& feature_names,
                                 const std::filesystem::path& out_dir) {
    if (attention_maps.empty()) throw ShapeError("no attention maps to export");
    std::filesystem::create_directories(out_dir);

    AttentionExport out;
    for (std::size_t r = 0; r < attention_maps.size(); ++r) {
        const Tensor& map = attention_maps[r];
        if (map.ndim() != 2) throw ShapeError("attention map must be m x n");
        const int m = map.dim(0);
        const int n = map.dim(1);
        if (feature_names.size() != static_cast<std::size_t>(n))
            throw ShapeError("feature name count does not match the attention width");

        std::vector<double> averages(static_cast<std::size_t>(n), 0.0);
        for (int i = 0; i < m; ++i) {
            double row_sum = 0.0;
            for (int j = 0; j < n; ++j) {
                row_sum += map.at(i, j);
                averages[static_cast<std::size_t>(j)] += map.at(i, j) / m;
            }
            if (std::abs(row_sum - 1.0) > 1e-9)
                throw MetricsError("attention row " + std::to_string(i) +
                                   " does not sum to 1");
        }
        double avg_sum = 0.0;
        for (double a : averages) avg_sum += a;
        if (std::abs(avg_sum - 1.0) > 1e-6)
            throw MetricsError("attention feature averages do not sum to 1");

        std::string tag = "N" + std::to_string(r + 1);
        std::filesystem::path csv_path = out_dir / ("attention_" + tag + ".csv");
        std::ofstream csv(csv_path);
        if (!csv) throw std::runtime_error("cannot open '" + csv_path.string() + "'");
        csv << "feature";
        for (int i = 0; i < m; ++i) csv << ",s" << i;
        csv << ",average\n";
        for (int j = 0; j < n; ++j) {
            csv << feature_names[static_cast<std::size_t>(j)];
            for (int i = 0; i < m; ++i) csv << "," << format_double(map.at(i, j));
            csv << "," << format_double(averages[static_cast<std::size_t>(j)]) << "\n";
        }
        if (!csv.flush()) throw std::runtime_error("failed writing '" + csv_path.string() + "'");

        std::filesystem::path svg_path = out_dir / ("attention_" + tag + ".svg");
        std::ofstream svg(svg_path);
        if (!svg) throw std::runtime_error("cannot open '" + svg_path.string() + "'");
        svg << attention_heatmap_svg(map, feature_names, averages,
                                     "Attention weights, repetition " + std::to_string(r + 1));
        if (!svg.flush()) throw std::runtime_error("failed writing '" + svg_path.string() + "'");

        out.csv_paths.push_back(csv_path);
        out.svg_paths.push_back(svg_path);
    }
    return out;
}

}  // namespace rpcate
