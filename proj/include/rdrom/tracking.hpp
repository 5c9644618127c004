#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "rdrom/field.hpp"
#include "rdrom/wave_track.hpp"

namespace rdrom {

/// Per-row local maxima on the periodic circle.
///
/// A column j is a maximum when v[j-1] < v[j] >= v[j+1] (indices mod K).
/// Prominence follows the usual topographic definition, walking around the
/// circle in both directions until a strictly higher sample is met. Peaks are
/// then accepted in decreasing height while their circular distance to every
/// accepted peak is at least `min_separation`. The sub-pixel position comes
/// from a 3-point parabola through the maximum and its two neighbours.
///
/// Output is ordered by (t_index, x_index).
std::vector<PeakPoint> detect_ridges(const Field& field, double min_prominence,
                                     int min_separation);

struct ClusterOptions {
  /// Points beyond this count are clustered on a deterministic stride
  /// subsample and the rest take the label of their nearest clustered point.
  int max_points = 1000;
  /// k-means restarts; each restart uses its own seeded k-means++ start.
  int kmeans_restarts = 8;
  int kmeans_max_iter = 300;
  std::uint64_t seed = 0;
};

/// Spectral clustering of peak points into `n_waves` tracks.
///
/// Affinity is exp(-d^2 / (2 sigma^2)) with sigma = kernel_scale and
/// d^2 = (circular dx)^2 + (dt * K / T_window)^2, where T_window is the span
/// of t_index in `points`. The top eigenvectors of D^-1/2 W D^-1/2 are row
/// normalised and split with k-means.
///
/// Tracks come back ordered by (first t_index, first x_index) and labelled
/// 0..n_waves-1 in that order. `unwrapped_x` is filled with unwrap_track.
std::vector<WaveTrack> cluster_waves(const std::vector<PeakPoint>& points, int n_waves,
                                     double kernel_scale, double domain_length,
                                     const ClusterOptions& options = {});

/// Eigengap heuristic: the k in [1, max_k] maximising lambda_k - lambda_{k+1}
/// of the normalised affinity spectrum (sorted descending).
int suggest_wave_count(const std::vector<PeakPoint>& points, double kernel_scale,
                       double domain_length, int max_k, const ClusterOptions& options = {});

/// Continues positions across the periodic seam: each step adds the
/// minimal-magnitude representative of (dx mod K). The first point is kept.
WaveTrack unwrap_track(const WaveTrack& track, double domain_length);

struct LinkOptions {
  /// Largest circular distance between a prediction and an accepted point.
  double gate = 4.0;
  /// Number of recent points used for the constant-velocity prediction.
  int history = 20;
};

/// Frame-to-frame association of points to existing tracks.
///
/// Each seed track is extended forward in time from its last point using a
/// constant-velocity prediction fitted to its recent history. A point is
/// accepted for a track when it is the nearest point to the prediction within
/// `gate`. Points that fall inside the gate of more than one track, and all
/// points near two predictions closer than 2 * gate (crossing waves), are left
/// unassigned and the tracks coast through. Unwrapped positions are continued
/// from the prediction.
std::vector<WaveTrack> link_tracks(const std::vector<PeakPoint>& points,
                                   const std::vector<WaveTrack>& seeds, double domain_length,
                                   const LinkOptions& options = {});

/// Unwrapped positions at every integer time first_t..last_t, linearly
/// interpolated across gaps. The range must lie within the track's span.
Eigen::VectorXd sample_track(const WaveTrack& track, int first_t, int last_t);

/// CSV with columns label,t_index,x_index,unwrapped_x.
void save_tracks(const std::vector<WaveTrack>& tracks, const std::filesystem::path& path);
std::vector<WaveTrack> load_tracks(const std::filesystem::path& path);

}  // namespace rdrom
