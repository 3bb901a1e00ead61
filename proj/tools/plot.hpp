#pragma once

#include <string>
#include <utility>
#include <vector>

#include "mgnm/evaluation.hpp"
#include "mgnm/geometry.hpp"

namespace mgnm::plot {

struct Series {
  std::string label;
  evaluation::PrCurve curve;
};

/// Precision-recall step curves on one set of axes.
std::string pr_curves_svg(const std::vector<Series>& series, const std::string& title);

/// Heatmap of `values` (rows x cols), white at the minimum and dark blue at the maximum.
std::string heatmap_svg(const Matrix& values, const std::string& title, int cell = 24);

}  // namespace mgnm::plot
