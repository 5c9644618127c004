#include "rdrom/tracking.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "rdrom/error.hpp"
#include "rdrom/numfmt.hpp"

namespace rdrom {

namespace {

// Representative of d modulo `length` in [-length/2, length/2).
double wrap_signed(double d, double length) {
  d = std::fmod(d, length);
  if (d >= 0.5 * length) d -= length;
  if (d < -0.5 * length) d += length;
  return d;
}

double circular_distance(double a, double b, double length) {
  return std::abs(wrap_signed(a - b, length));
}

double prominence(const Eigen::VectorXd& v, Eigen::Index peak) {
  const Eigen::Index k = v.size();
  auto walk = [&](int direction) {
    double lowest = v(peak);
    for (Eigen::Index step = 1; step < k; ++step) {
      const Eigen::Index j = ((peak + direction * step) % k + k) % k;
      if (v(j) > v(peak)) break;
      lowest = std::min(lowest, v(j));
    }
    return lowest;
  };
  return v(peak) - std::max(walk(-1), walk(+1));
}

}  // namespace

std::vector<PeakPoint> detect_ridges(const Field& field, double min_prominence,
                                     int min_separation) {
  require(min_separation >= 1, "detect_ridges: min_separation must be >= 1");
  const Eigen::Index k = field.space_points();
  const double length = field.domain_length();
  std::vector<PeakPoint> out;

  for (Eigen::Index r = 0; r < field.time_steps(); ++r) {
    const Eigen::VectorXd v = field.values().row(r).transpose();
    struct Candidate {
      Eigen::Index column;
      double height;
      double prominence;
    };
    std::vector<Candidate> candidates;
    for (Eigen::Index j = 0; j < k; ++j) {
      const double left = v((j + k - 1) % k);
      const double right = v((j + 1) % k);
      if (v(j) > left && v(j) >= right) {
        const double p = prominence(v, j);
        if (p >= min_prominence) candidates.push_back({j, v(j), p});
      }
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      if (a.height != b.height) return a.height > b.height;
      return a.prominence > b.prominence;
    });

    std::vector<PeakPoint> row_points;
    std::vector<Eigen::Index> accepted;
    for (const auto& c : candidates) {
      bool far_enough = true;
      for (auto a : accepted) {
        Eigen::Index d = std::abs(c.column - a);
        d = std::min(d, k - d);
        if (d < min_separation) {
          far_enough = false;
          break;
        }
      }
      if (!far_enough) continue;
      accepted.push_back(c.column);

      const double ym = v((c.column + k - 1) % k);
      const double y0 = v(c.column);
      const double yp = v((c.column + 1) % k);
      const double denom = ym - 2.0 * y0 + yp;
      double delta = 0.0;
      if (denom < 0.0) delta = std::clamp(0.5 * (ym - yp) / denom, -0.5, 0.5);
      double x = std::fmod(static_cast<double>(c.column) + delta + length, length);
      if (x >= length) x = 0.0;
      const double height = y0 - 0.25 * (ym - yp) * delta;
      row_points.push_back({static_cast<int>(r), x, height});
    }
    std::sort(row_points.begin(), row_points.end(),
              [](const auto& a, const auto& b) { return a.x_index < b.x_index; });
    out.insert(out.end(), row_points.begin(), row_points.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct ScaledPoints {
  std::vector<double> x;
  std::vector<double> s;  // scaled time
};

ScaledPoints scale_points(const std::vector<PeakPoint>& points, double domain_length) {
  int t_min = std::numeric_limits<int>::max(), t_max = std::numeric_limits<int>::min();
  for (const auto& p : points) {
    t_min = std::min(t_min, p.t_index);
    t_max = std::max(t_max, p.t_index);
  }
  const double window = static_cast<double>(t_max - t_min + 1);
  const double scale = domain_length / window;
  ScaledPoints out;
  for (const auto& p : points) {
    out.x.push_back(p.x_index);
    out.s.push_back((p.t_index - t_min) * scale);
  }
  return out;
}

double scaled_distance_sq(const ScaledPoints& sp, std::size_t i, std::size_t j, double length) {
  const double dx = wrap_signed(sp.x[i] - sp.x[j], length);
  const double ds = sp.s[i] - sp.s[j];
  return dx * dx + ds * ds;
}

std::vector<std::size_t> subsample_indices(std::size_t n, int max_points) {
  std::vector<std::size_t> idx;
  if (max_points <= 0 || n <= static_cast<std::size_t>(max_points)) {
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
  }
  for (int i = 0; i < max_points; ++i)
    idx.push_back(static_cast<std::size_t>(i) * n / static_cast<std::size_t>(max_points));
  return idx;
}

Eigen::MatrixXd normalized_affinity(const ScaledPoints& sp, const std::vector<std::size_t>& idx,
                                    double sigma, double length) {
  const auto m = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const double a = std::exp(-scaled_distance_sq(sp, idx[i], idx[j], length) * inv);
      w(i, j) = a;
      w(j, i) = a;
    }
  Eigen::VectorXd d = w.rowwise().sum();
  for (Eigen::Index i = 0; i < m; ++i) d(i) = 1.0 / std::sqrt(d(i) + 1e-300);
  return d.asDiagonal() * w * d.asDiagonal();
}

std::vector<int> kmeans(const Eigen::MatrixXd& rows, int k, const ClusterOptions& options) {
  const Eigen::Index n = rows.rows();
  std::vector<int> best_labels(static_cast<std::size_t>(n), 0);
  double best_inertia = std::numeric_limits<double>::infinity();

  for (int restart = 0; restart < std::max(1, options.kmeans_restarts); ++restart) {
    std::mt19937_64 rng(options.seed * 1000003ULL + static_cast<std::uint64_t>(restart));
    Eigen::MatrixXd centers(k, rows.cols());
    std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
    centers.row(0) = rows.row(pick(rng));
    Eigen::VectorXd nearest = (rows.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
      const double total = nearest.sum();
      Eigen::Index chosen = 0;
      if (total > 0.0) {
        std::uniform_real_distribution<double> u(0.0, total);
        double target = u(rng), acc = 0.0;
        for (chosen = 0; chosen < n - 1; ++chosen) {
          acc += nearest(chosen);
          if (acc >= target) break;
        }
      } else {
        chosen = pick(rng);
      }
      centers.row(c) = rows.row(chosen);
      nearest = nearest.cwiseMin((rows.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    double inertia = 0.0;
    for (int iter = 0; iter < options.kmeans_max_iter; ++iter) {
      bool changed = false;
      inertia = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
          const double d = (rows.row(i) - centers.row(c)).squaredNorm();
          if (d < best_d) {
            best_d = d;
            best = c;
          }
        }
        inertia += best_d;
        if (labels[static_cast<std::size_t>(i)] != best) {
          labels[static_cast<std::size_t>(i)] = best;
          changed = true;
        }
      }
      if (!changed) break;
      Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, rows.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += rows.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
          centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
    }
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_labels = labels;
    }
  }
  return best_labels;
}

std::vector<WaveTrack> build_tracks(const std::vector<PeakPoint>& points,
                                    const std::vector<int>& labels, int n_waves,
                                    double domain_length) {
  std::vector<WaveTrack> tracks(static_cast<std::size_t>(n_waves));
  for (std::size_t i = 0; i < points.size(); ++i)
    tracks[static_cast<std::size_t>(labels[i])].points.push_back(points[i]);
  for (auto& t : tracks)
    std::sort(t.points.begin(), t.points.end(), [](const auto& a, const auto& b) {
      if (a.t_index != b.t_index) return a.t_index < b.t_index;
      return a.x_index < b.x_index;
    });
  std::stable_sort(tracks.begin(), tracks.end(), [](const auto& a, const auto& b) {
    if (a.points.empty() || b.points.empty()) return !a.points.empty() && b.points.empty();
    if (a.points.front().t_index != b.points.front().t_index)
      return a.points.front().t_index < b.points.front().t_index;
    return a.points.front().x_index < b.points.front().x_index;
  });
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    tracks[i].label = static_cast<int>(i);
    tracks[i] = unwrap_track(tracks[i], domain_length);
  }
  return tracks;
}

}  // namespace

std::vector<WaveTrack> cluster_waves(const std::vector<PeakPoint>& points, int n_waves,
                                     double kernel_scale, double domain_length,
                                     const ClusterOptions& options) {
  require(n_waves >= 1, "cluster_waves: n_waves must be >= 1");
  require(!points.empty(), "cluster_waves: no points to cluster");
  require(kernel_scale > 0.0, "cluster_waves: kernel_scale must be > 0");
  if (static_cast<std::size_t>(n_waves) > points.size())
    fail(ErrorCode::InvalidArgument, "cluster_waves: n_waves (" + std::to_string(n_waves) +
                                         ") exceeds the number of points (" +
                                         std::to_string(points.size()) + ")");

  std::vector<int> labels(points.size(), 0);
  if (n_waves > 1) {
    const ScaledPoints sp = scale_points(points, domain_length);
    const auto idx = subsample_indices(points.size(), options.max_points);
    const Eigen::MatrixXd m = normalized_affinity(sp, idx, kernel_scale, domain_length);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    // Eigenvalues ascend; the leading n_waves vectors are the last columns.
    Eigen::MatrixXd embedding = eig.eigenvectors().rightCols(n_waves);
    for (Eigen::Index i = 0; i < embedding.rows(); ++i) {
      const double norm = embedding.row(i).norm();
      if (norm > 0.0) embedding.row(i) /= norm;
    }
    const std::vector<int> sub_labels = kmeans(embedding, n_waves, options);

    std::vector<bool> sampled(points.size(), false);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      labels[idx[i]] = sub_labels[i];
      sampled[idx[i]] = true;
    }
    for (std::size_t p = 0; p < points.size(); ++p) {
      if (sampled[p]) continue;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const double d = scaled_distance_sq(sp, p, idx[i], domain_length);
        if (d < best) {
          best = d;
          labels[p] = sub_labels[i];
        }
      }
    }
  }
  return build_tracks(points, labels, n_waves, domain_length);
}

int suggest_wave_count(const std::vector<PeakPoint>& points, double kernel_scale,
                       double domain_length, int max_k, const ClusterOptions& options) {
  require(!points.empty(), "suggest_wave_count: no points");
  require(max_k >= 1, "suggest_wave_count: max_k must be >= 1");
  const ScaledPoints sp = scale_points(points, domain_length);
  const auto idx = subsample_indices(points.size(), options.max_points);
  const Eigen::MatrixXd m = normalized_affinity(sp, idx, kernel_scale, domain_length);
  Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly)
                           .eigenvalues()
                           .reverse();
  const int limit = std::min<int>(max_k, static_cast<int>(ev.size()) - 1);
  int best_k = 1;
  double best_gap = -1.0;
  for (int k = 1; k <= limit; ++k) {
    const double gap = ev(k - 1) - ev(k);
    if (gap > best_gap) {
      best_gap = gap;
      best_k = k;
    }
  }
  return best_k;
}

WaveTrack unwrap_track(const WaveTrack& track, double domain_length) {
  WaveTrack out = track;
  out.unwrapped_x.assign(track.points.size(), 0.0);
  for (std::size_t i = 0; i < track.points.size(); ++i) {
    if (i == 0) {
      out.unwrapped_x[0] = track.points[0].x_index;
    } else {
      const double dx = track.points[i].x_index - track.points[i - 1].x_index;
      out.unwrapped_x[i] = out.unwrapped_x[i - 1] + wrap_signed(dx, domain_length);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct LinkState {
  WaveTrack track;
  double predict(int t, int history) const {
    const std::size_t n = track.points.size();
    const std::size_t first = n > static_cast<std::size_t>(history) ? n - history : 0;
    const std::size_t count = n - first;
    if (count == 1) return track.unwrapped_x.back();
    double st = 0, sx = 0, stt = 0, stx = 0;
    for (std::size_t i = first; i < n; ++i) {
      const double ti = track.points[i].t_index;
      const double xi = track.unwrapped_x[i];
      st += ti;
      sx += xi;
      stt += ti * ti;
      stx += ti * xi;
    }
    const double c = static_cast<double>(count);
    const double denom = c * stt - st * st;
    if (denom <= 0.0) return sx / c;
    const double slope = (c * stx - st * sx) / denom;
    const double intercept = (sx - slope * st) / c;
    return intercept + slope * t;
  }
};

}  // namespace

std::vector<WaveTrack> link_tracks(const std::vector<PeakPoint>& points,
                                   const std::vector<WaveTrack>& seeds, double domain_length,
                                   const LinkOptions& options) {
  require(options.gate > 0.0, "link_tracks: gate must be > 0");
  require(options.history >= 2, "link_tracks: history must be >= 2");
  std::vector<LinkState> states;
  for (const auto& seed : seeds) {
    require(!seed.points.empty(), "link_tracks: empty seed track");
    LinkState state{seed.unwrapped_x.size() == seed.points.size()
                        ? seed
                        : unwrap_track(seed, domain_length)};
    states.push_back(std::move(state));
  }

  std::map<int, std::vector<const PeakPoint*>> rows;
  for (const auto& p : points) rows[p.t_index].push_back(&p);

  const double gate = options.gate;
  for (const auto& [t, row] : rows) {
    std::vector<double> pred(states.size(), 0.0);
    std::vector<bool> active(states.size(), false), crowded(states.size(), false);
    for (std::size_t i = 0; i < states.size(); ++i) {
      active[i] = states[i].track.points.back().t_index < t;
      if (active[i]) pred[i] = states[i].predict(t, options.history);
    }
    for (std::size_t i = 0; i < states.size(); ++i)
      for (std::size_t j = i + 1; j < states.size(); ++j)
        if (active[i] && active[j] &&
            circular_distance(pred[i], pred[j], domain_length) < 2.0 * gate) {
          crowded[i] = true;
          crowded[j] = true;
        }

    std::vector<const PeakPoint*> choice(states.size(), nullptr);
    std::vector<double> choice_distance(states.size(), std::numeric_limits<double>::infinity());
    for (const PeakPoint* p : row) {
      int owner = -1;
      int within = 0;
      double owner_distance = 0.0;
      for (std::size_t i = 0; i < states.size(); ++i) {
        if (!active[i]) continue;
        const double d = circular_distance(p->x_index, pred[i], domain_length);
        if (d <= gate) {
          ++within;
          owner = static_cast<int>(i);
          owner_distance = d;
        }
      }
      if (within != 1 || crowded[static_cast<std::size_t>(owner)]) continue;
      const auto o = static_cast<std::size_t>(owner);
      if (owner_distance < choice_distance[o]) {
        choice_distance[o] = owner_distance;
        choice[o] = p;
      }
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
      if (!choice[i]) continue;
      auto& track = states[i].track;
      track.points.push_back(*choice[i]);
      track.unwrapped_x.push_back(pred[i] +
                                  wrap_signed(choice[i]->x_index - pred[i], domain_length));
    }
  }

  std::vector<WaveTrack> out;
  for (auto& s : states) out.push_back(std::move(s.track));
  return out;
}

// ---------------------------------------------------------------------------

void save_tracks(const std::vector<WaveTrack>& tracks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << "label,t_index,x_index,unwrapped_x\n";
  for (const auto& track : tracks)
    for (std::size_t i = 0; i < track.points.size(); ++i) {
      const double unwrapped =
          i < track.unwrapped_x.size() ? track.unwrapped_x[i] : track.points[i].x_index;
      out << track.label << ',' << track.points[i].t_index << ','
          << format_double(track.points[i].x_index) << ',' << format_double(unwrapped) << '\n';
    }
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

std::vector<WaveTrack> load_tracks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open track file " + path.string());
  std::string line;
  std::getline(in, line);
  if (line.rfind("label,t_index,x_index,unwrapped_x", 0) != 0)
    fail(ErrorCode::Parse, path.string() + ": missing track CSV header");
  std::map<int, WaveTrack> by_label;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 4)
      fail(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + " has " +
                                 std::to_string(cells.size()) + " columns, expected 4");
    std::array<double, 4> v{};
    for (std::size_t c = 0; c < 4; ++c) {
      auto parsed = parse_double(cells[c]);
      if (!parsed)
        fail(ErrorCode::Parse, path.string() + ": row " + std::to_string(row) + ", column " +
                                   std::to_string(c) + " is not numeric");
      v[c] = *parsed;
    }
    auto& track = by_label[static_cast<int>(v[0])];
    track.label = static_cast<int>(v[0]);
    track.points.push_back({static_cast<int>(v[1]), v[2], 0.0});
    track.unwrapped_x.push_back(v[3]);
  }
  std::vector<WaveTrack> out;
  for (auto& [label, track] : by_label) out.push_back(std::move(track));
  return out;
}

namespace {

// Unwrapped position at integer time t by linear interpolation between the
// bracketing track points; points must be sorted by t_index.
double position_at(const WaveTrack& track, int t) {
  const auto& pts = track.points;
  auto it = std::lower_bound(pts.begin(), pts.end(), t,
                             [](const PeakPoint& p, int v) { return p.t_index < v; });
  const auto i = static_cast<std::size_t>(it - pts.begin());
  if (i < pts.size() && pts[i].t_index == t) return track.unwrapped_x[i];
  const auto& a = pts[i - 1];
  const auto& b = pts[i];
  const double w = static_cast<double>(t - a.t_index) / static_cast<double>(b.t_index - a.t_index);
  return (1.0 - w) * track.unwrapped_x[i - 1] + w * track.unwrapped_x[i];
}


}  // namespace

Eigen::VectorXd sample_track(const WaveTrack& track, int first_t, int last_t) {
  require(!track.points.empty(), "sample_track: empty track");
  require(track.unwrapped_x.size() == track.points.size(), "sample_track: track is not unwrapped");
  require(first_t <= last_t, "sample_track: empty time range");
  require(first_t >= track.points.front().t_index && last_t <= track.points.back().t_index,
          "sample_track: time range outside the track");
  Eigen::VectorXd out(last_t - first_t + 1);
  for (int t = first_t; t <= last_t; ++t) out(t - first_t) = position_at(track, t);
  return out;
}

}  // namespace rdrom
