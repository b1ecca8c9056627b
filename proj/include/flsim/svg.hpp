#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace flsim {

struct Series {
  std::string label;
  std::vector<double> xs;
  std::vector<double> ys;
};

/// Self-contained SVG line chart; the plotted values are embedded as a
/// table in an SVG comment so charts stay diff-able and re-parsable.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& xlabel, const std::string& ylabel,
                      const std::vector<Series>& series);

/// Square heat map of a symmetric matrix (NaN cells render grey).
void write_heatmap(const std::string& path, const std::string& title,
                   const Eigen::MatrixXd& values);

}  // namespace flsim
