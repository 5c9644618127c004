#pragma once

#include <vector>

namespace rdrom {

/// A detected (or generated) wave-front location in the (x, t) plane.
struct PeakPoint {
  int t_index = 0;
  double x_index = 0.0;  // sub-pixel column, in [0, K)
  double intensity = 0.0;
};

/// The points belonging to one traveling wave, sorted by t_index.
/// `unwrapped_x` continues the periodic positions across the seam so that
/// unwrapped_x[k] == points[k].x_index (mod K).
struct WaveTrack {
  int label = 0;
  std::vector<PeakPoint> points;
  std::vector<double> unwrapped_x;
};

}  // namespace rdrom
