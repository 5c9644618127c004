#include "rdrom/svg.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "rdrom/error.hpp"

namespace rdrom {

namespace {

constexpr double kWidth = 640, kHeight = 480, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string label_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Viridis sampled at five stops, linearly interpolated.
std::string colour(double u) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{{68, 1, 84},
                                                              {59, 82, 139},
                                                              {33, 145, 140},
                                                              {94, 201, 98},
                                                              {253, 231, 37}}};
  u = std::clamp(std::isfinite(u) ? u : 0.0, 0.0, 1.0) * 4.0;
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(u), 3);
  const double f = u - static_cast<double>(i);
  char buf[16];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

void frame(std::ostringstream& os, const std::string& title, const std::string& x_label,
           const std::string& y_label) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << num(kWidth / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(title) << "</text>\n"
     << "<text x=\"" << num(kLeft + (kWidth - kLeft - kRight) / 2) << "\" y=\"" << num(kHeight - 12)
     << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n"
     << "<text x=\"16\" y=\"" << num(kTop + (kHeight - kTop - kBottom) / 2)
     << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << num(kTop + (kHeight - kTop - kBottom) / 2)
     << ")\">" << escape(y_label) << "</text>\n";
}

}  // namespace

std::string svg_heatmap(const Eigen::MatrixXd& values, const std::string& title, const std::string& x_label,
                        const std::string& y_label, int max_cells) {
  require(values.size() > 0, "svg_heatmap: empty matrix");
  require(max_cells >= 1, "svg_heatmap: max_cells must be >= 1");
  const Eigen::Index rows = std::min<Eigen::Index>(values.rows(), max_cells);
  const Eigen::Index cols = std::min<Eigen::Index>(values.cols(), max_cells);
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(rows, cols);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(rows, cols);
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      const Eigen::Index rr = r * rows / values.rows(), cc = c * cols / values.cols();
      cells(rr, cc) += values(r, c);
      counts(rr, cc) += 1.0;
    }
  cells = cells.cwiseQuotient(counts);
  const double lo = cells.minCoeff(), hi = cells.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;

  std::ostringstream os;
  frame(os, title, x_label, y_label);
  const double w = (kWidth - kLeft - kRight) / static_cast<double>(cols);
  const double h = (kHeight - kTop - kBottom) / static_cast<double>(rows);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      os << "<rect x=\"" << num(kLeft + c * w) << "\" y=\"" << num(kTop + r * h) << "\" width=\""
         << num(w + 0.05) << "\" height=\"" << num(h + 0.05) << "\" fill=\"" << colour((cells(r, c) - lo) / span)
         << "\"/>\n";
  os << "<text x=\"" << num(kLeft) << "\" y=\"" << num(kHeight - 30) << "\">0</text>\n"
     << "<text x=\"" << num(kWidth - kRight) << "\" y=\"" << num(kHeight - 30) << "\" text-anchor=\"end\">"
     << values.cols() << "</text>\n"
     << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(kHeight - kBottom) << "\" text-anchor=\"end\">"
     << values.rows() << "</text>\n"
     << "<text x=\"" << num(kWidth - kRight) << "\" y=\"" << num(kTop - 6) << "\" text-anchor=\"end\">range ["
     << label_num(lo) << ", " << label_num(hi) << "]</text>\n"
     << "</svg>\n";
  return os.str();
}

std::string svg_plot(const std::vector<PlotSeries>& series, const std::string& title, const std::string& x_label,
                     const std::string& y_label) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    require(s.x.size() == s.y.size(), "svg_plot: x and y lengths differ in series '" + s.label + "'");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return kTop + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  static constexpr std::array<const char*, 6> palette{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  std::ostringstream os;
  frame(os, title, x_label, y_label);
  os << "<rect x=\"" << num(kLeft) << "\" y=\"" << num(kTop) << "\" width=\"" << num(pw) << "\" height=\""
     << num(ph) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* c = palette[k % palette.size()];
    if (s.markers) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
          os << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i])) << "\" r=\"1.2\" fill=\"" << c
             << "\"/>\n";
    } else {
      os << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.2\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) os << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
      os << "\"/>\n";
    }
    os << "<text x=\"" << num(kLeft + 8) << "\" y=\"" << num(kTop + 16 + 14 * static_cast<double>(k))
       << "\" fill=\"" << c << "\">" << escape(s.label) << "</text>\n";
  }
  os << "<text x=\"" << num(kLeft) << "\" y=\"" << num(kHeight - 30) << "\">" << label_num(xmin) << "</text>\n"
     << "<text x=\"" << num(kWidth - kRight) << "\" y=\"" << num(kHeight - 30) << "\" text-anchor=\"end\">"
     << label_num(xmax) << "</text>\n"
     << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(kHeight - kBottom) << "\" text-anchor=\"end\">"
     << label_num(ymin) << "</text>\n"
     << "<text x=\"" << num(kLeft - 6) << "\" y=\"" << num(kTop + 10) << "\" text-anchor=\"end\">"
     << label_num(ymax) << "</text>\n"
     << "</svg>\n";
  return os.str();
}

}  // namespace rdrom
