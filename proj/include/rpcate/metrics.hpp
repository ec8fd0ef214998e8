#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rpcate/data.hpp"
#include "rpcate/tensor.hpp"

namespace rpcate {

/// A metric is undefined for the given batch (see mir_percent).
struct MetricsError : std::runtime_error {
    explicit MetricsError(const std::string& what) : std::runtime_error(what) {}
};

struct MetricsReport {
    std::string variant;     // "mechanistic" or "hybrid"
    int samples = 0;
    double mae = 0.0;        // against the residual target y
    double rmse = 0.0;
    double are_percent = 0.0;  // relative error of the absolute prediction, mean over valid rows
    int err_lt_1pct = 0;       // strict
    int err_gt_5pct = 0;       // strict
    int are_excluded = 0;      // rows with y_true == 0, skipped by relative metrics
    double mir_percent = 0.0;  // 0 exactly for the mechanistic variant
};

nlohmann::json report_to_json(const MetricsReport& r);

struct RelativeErrors {
    std::vector<double> percent;  // aligned with input rows; meaningful where valid
    std::vector<bool> valid;
    int excluded = 0;
    int below_1 = 0;
    int above_5 = 0;
    double mean_percent = 0.0;    // over valid rows, 0 if none
};

/// Relative errors of the absolute prediction (correction + y_me) against
/// y_true, in percent. Rows with y_true == 0 are excluded and counted.
RelativeErrors relative_errors(std::span<const double> corrections,
                               std::span<const double> y_me,
                               std::span<const double> y_true);

/// Model improvement rate over the mechanistic baseline, in percent.
/// Errors when the baseline is already exact (either term's denominator 0).
double mir_percent(std::span<const double> corrections, std::span<const double> y_me,
                   std::span<const double> y_true);

/// (mechanistic-only, hybrid) reports for corrections in dataset row order.
std::pair<MetricsReport, MetricsReport> full_report(const Tensor& corrections,
                                                    const Dataset& d);

struct AttentionExport {
    std::vector<std::filesystem::path> csv_paths;
    std::vector<std::filesystem::path> svg_paths;
};

/// One CSV and one SVG heatmap per repetition. CSV rows are features and
/// columns are samples, with a trailing per-feature average column; the SVG
/// annotates the averages beside a color bar.
AttentionExport export_attention(const std::vector<Tensor>& attention_maps,
                                 const std::vector<std::string>& feature_names,
                                 const std::filesystem::path& out_dir);

}  // namespace rpcate
