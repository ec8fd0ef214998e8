#pragma once

#include <span>
#include <string>
#include <vector>

#include "rpcate/tensor.hpp"

namespace rpcate {

/// Heatmap of an m x n attention map drawn as n feature rows by m sample
/// columns, with a color bar and the per-feature averages annotated.
std::string attention_heatmap_svg(const Tensor& map, const std::vector<std::string>& feature_names,
                                  const std::vector<double>& averages, const std::string& title);

/// Simple line chart, one point per element (used for the loss history).
std::string line_chart_svg(std::span<const double> values, const std::string& title,
                           const std::string& y_label);

}  // namespace rpcate
