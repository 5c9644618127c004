#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace rdrom {

/// Static heatmap; rows run top to bottom. Matrices larger than
/// max_cells x max_cells are block-averaged down first.
std::string svg_heatmap(const Eigen::MatrixXd& values, const std::string& title,
                        const std::string& x_label, const std::string& y_label, int max_cells = 200);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool markers = false;  // draw points instead of a polyline
};

std::string svg_plot(const std::vector<PlotSeries>& series, const std::string& title,
                     const std::string& x_label, const std::string& y_label);

}  // namespace rdrom
