#include <gtest/gtest.h>

#include <map>
#include <set>

#include "rdrom/error.hpp"
#include "rdrom/tracking.hpp"
#include "test_util.hpp"

using namespace rdrom;
using test::gaussian;

namespace {

double circ(double a, double b, double k) {
  double d = std::fmod(std::abs(a - b), k);
  return std::min(d, k - d);
}

// Label of the truth track nearest to a point.
int truth_label(const SynthResult& r, const PeakPoint& p, double k) {
  int best = -1;
  double dist = 1e300;
  for (std::size_t i = 0; i < r.truth.size(); ++i) {
    const double d = circ(r.truth[i].points[static_cast<std::size_t>(p.t_index)].x_index, p.x_index, k);
    if (d < dist) {
      dist = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::vector<PeakPoint> head(const std::vector<PeakPoint>& pts, int rows) {
  std::vector<PeakPoint> out;
  for (const auto& p : pts)
    if (p.t_index < rows) out.push_back(p);
  return out;
}

}  // namespace

TEST(DetectRidges, ConstantFieldIsEmpty) {
  EXPECT_TRUE(detect_ridges(Field(Eigen::MatrixXd::Constant(5, 20, 3.0), 1.0), 0.0, 1).empty());
}

TEST(DetectRidges, SinglePulseOnePointPerRow) {
  const SynthResult r = synth_field(test::spec(180, 60, {gaussian(170.3, 2.7)}));
  const auto pts = detect_ridges(r.field, 0.1, 5);
  ASSERT_EQ(pts.size(), 60u);
  for (const auto& p : pts) {
    EXPECT_LE(circ(p.x_index, r.truth[0].points[static_cast<std::size_t>(p.t_index)].x_index, 180), 0.5);
    EXPECT_GE(p.x_index, 0.0);
    EXPECT_LT(p.x_index, 180.0);
  }
}

TEST(DetectRidges, TwoPulsesHalfPeriodApart) {
  const Field f = synth_field(test::spec(180, 40, {gaussian(10, 3), gaussian(100, 3)})).field;
  const auto pts = detect_ridges(f, 0.1, 5);
  std::map<int, int> per_row;
  for (const auto& p : pts) ++per_row[p.t_index];
  ASSERT_EQ(per_row.size(), 40u);
  for (const auto& [t, n] : per_row) EXPECT_EQ(n, 2) << t;
}

TEST(DetectRidges, RotationEquivariant) {
  const Field f = synth_field(test::spec(90, 15, {gaussian(5, 2), gaussian(50, -1, 0.6)}, 0.05, 3)).field;
  const int shift = 37;
  Eigen::MatrixXd rot(f.time_steps(), f.space_points());
  for (Eigen::Index x = 0; x < 90; ++x) rot.col((x + shift) % 90) = f.values().col(x);
  auto a = detect_ridges(f, 0.2, 4);
  auto b = detect_ridges(Field(rot, 1.0), 0.2, 4);
  ASSERT_EQ(a.size(), b.size());
  std::multiset<std::pair<int, long long>> sa, sb;
  for (const auto& p : a) sa.insert({p.t_index, std::llround(std::fmod(p.x_index + shift, 90.0) * 1e6)});
  for (const auto& p : b) sb.insert({p.t_index, std::llround(p.x_index * 1e6)});
  EXPECT_EQ(sa, sb);
}

TEST(DetectRidges, MinSeparationRespected) {
  const Field f = synth_field(test::spec(100, 5, {gaussian(10, 0, 1.0, 1.5), gaussian(19, 0, 0.8, 1.5)})).field;
  EXPECT_EQ(detect_ridges(f, 0.05, 1).size(), 10u);
  const auto wide = detect_ridges(f, 0.05, 12);
  ASSERT_EQ(wide.size(), 5u);
  for (const auto& p : wide) EXPECT_NEAR(p.x_index, 10.0, 0.5);
  EXPECT_THROW(detect_ridges(f, 0.1, 0), Error);
}

TEST(ClusterWaves, SingleClusterTakesAll) {
  const Field f = synth_field(test::spec(180, 10, {gaussian(10, 3), gaussian(100, 3)})).field;
  const auto pts = detect_ridges(f, 0.1, 5);
  const auto tracks = cluster_waves(pts, 1, 10.0, 180);
  ASSERT_EQ(tracks.size(), 1u);
  EXPECT_EQ(tracks[0].points.size(), pts.size());
}

TEST(ClusterWaves, TooManyClustersIsAnError) {
  const std::vector<PeakPoint> pts = {{0, 1.0, 1.0}, {1, 2.0, 1.0}};
  EXPECT_THROW(cluster_waves(pts, 3, 10.0, 180), Error);
  EXPECT_THROW(cluster_waves({}, 1, 10.0, 180), Error);
}

TEST(ClusterWaves, ParallelTracksMatchGenerator) {
  const SynthResult r = synth_field(test::spec(180, 10, {gaussian(10, 4), gaussian(100, 4)}));
  const auto pts = detect_ridges(r.field, 0.1, 5);
  const auto tracks = cluster_waves(pts, 2, 10.0, 180);
  ASSERT_EQ(tracks.size(), 2u);
  std::size_t total = 0;
  for (const auto& t : tracks) {
    total += t.points.size();
    const int label = truth_label(r, t.points.front(), 180);
    for (const auto& p : t.points) EXPECT_EQ(truth_label(r, p, 180), label);
  }
  EXPECT_EQ(total, pts.size());
}

TEST(ClusterWaves, ThreeWavesNoMisassignments) {
  // Three co-rotating fronts, separation >= 10 kernel scales.
  const SynthResult r = synth_field(test::spec(360, 10, {gaussian(5, 6), gaussian(125, 6.5), gaussian(245, 5.5)}));
  const auto pts = detect_ridges(r.field, 0.1, 5);
  const auto tracks = cluster_waves(pts, 3, 10.0, 360);
  ASSERT_EQ(tracks.size(), 3u);
  std::set<int> labels;
  for (const auto& t : tracks) {
    EXPECT_EQ(t.points.size(), 10u);
    const int label = truth_label(r, t.points.front(), 360);
    labels.insert(label);
    for (const auto& p : t.points) EXPECT_EQ(truth_label(r, p, 360), label);
  }
  EXPECT_EQ(labels.size(), 3u);
}

TEST(ClusterWaves, DeterministicOrderingAndLabels) {
  const Field f = synth_field(test::spec(180, 10, {gaussian(100, 4), gaussian(10, 4)}, 0.02, 5)).field;
  const auto pts = detect_ridges(f, 0.1, 5);
  const auto a = cluster_waves(pts, 2, 10.0, 180);
  const auto b = cluster_waves(pts, 2, 10.0, 180);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, static_cast<int>(i));
    ASSERT_EQ(a[i].points.size(), b[i].points.size());
    for (std::size_t j = 0; j < a[i].points.size(); ++j) EXPECT_EQ(a[i].points[j].x_index, b[i].points[j].x_index);
  }
  // Ordered by first point: the wave starting at x=10 comes first.
  EXPECT_LT(a[0].points.front().x_index, a[1].points.front().x_index);
}

TEST(ClusterWaves, SubsampledPointsAreAllAssigned) {
  const Field f = synth_field(test::spec(180, 200, {gaussian(10, 1), gaussian(100, 1)})).field;
  const auto pts = detect_ridges(f, 0.1, 5);
  ClusterOptions o;
  o.max_points = 50;
  const auto tracks = cluster_waves(pts, 2, 10.0, 180, o);
  std::size_t total = 0;
  for (const auto& t : tracks) total += t.points.size();
  EXPECT_EQ(total, pts.size());
}

TEST(SuggestWaveCount, SeparatedBlobs) {
  std::vector<PeakPoint> pts;
  for (double c : {20.0, 80.0, 140.0})
    for (int j = 0; j < 5; ++j) pts.push_back({0, c + 0.5 * j, 1.0});
  EXPECT_EQ(suggest_wave_count(pts, 10.0, 180, 6), 3);
}

TEST(UnwrapTrack, IdentityWithoutSeam) {
  WaveTrack t;
  for (int i = 0; i < 10; ++i) t.points.push_back({i, 20.0 + 1.5 * i, 1.0});
  const WaveTrack u = unwrap_track(t, 180);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(u.unwrapped_x[static_cast<std::size_t>(i)], t.points[static_cast<std::size_t>(i)].x_index);
}

TEST(UnwrapTrack, ConstantSpeedAcrossSeams) {
  for (double c : {7.3, -7.3}) {
    const SynthResult r = synth_field(test::spec(180, 200, {gaussian(50, c)}));
    WaveTrack raw = r.truth[0];
    raw.unwrapped_x.clear();
    const WaveTrack u = unwrap_track(raw, 180);
    EXPECT_NEAR(u.unwrapped_x.back() - u.unwrapped_x.front(), c * 199, 1e-9);
    for (std::size_t i = 0; i < u.points.size(); ++i) {
      double rewrapped = std::fmod(u.unwrapped_x[i], 180.0);
      if (rewrapped < 0) rewrapped += 180.0;
      EXPECT_NEAR(rewrapped, raw.points[i].x_index, 1e-9);
    }
  }
}

TEST(LinkTracks, FollowsTwoWavesOverLongRecord) {
  // The 0.2 px/step drift closes the 90 px gap to 30 px by the last row.
  const SynthResult r = synth_field(test::spec(180, 300, {gaussian(10, 4.0), gaussian(100, 4.2, 0.5)}, 0.01, 2));
  const auto pts = detect_ridges(r.field, 0.1, 5);
  const auto seeds = cluster_waves(head(pts, 10), 2, 10.0, 180);
  const auto tracks = link_tracks(pts, seeds, 180);
  ASSERT_EQ(tracks.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(tracks[i].points.size(), 300u);
    EXPECT_NEAR(tracks[i].unwrapped_x.back() - tracks[i].unwrapped_x.front(),
                r.truth[i].unwrapped_x.back() - r.truth[i].unwrapped_x.front(), 1.0);
    std::set<int> rows;
    for (const auto& p : tracks[i].points) EXPECT_TRUE(rows.insert(p.t_index).second);
  }
}

TEST(LinkTracks, CrossingWavesCoastWithoutSwapping) {
  // Counter-rotating pulses meet twice; neither track may jump to the other wave.
  const SynthResult r = synth_field(test::spec(180, 200, {gaussian(10, 2.0), gaussian(100, -2.0, 0.7)}));
  const auto pts = detect_ridges(r.field, 0.1, 5);
  const auto tracks = link_tracks(pts, cluster_waves(head(pts, 10), 2, 10.0, 180), 180);
  ASSERT_EQ(tracks.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_GT(tracks[i].points.size(), 150u);
    for (std::size_t j = 0; j < tracks[i].points.size(); ++j)
      EXPECT_EQ(truth_label(r, tracks[i].points[j], 180), static_cast<int>(i));
    EXPECT_NEAR(tracks[i].unwrapped_x.back() - tracks[i].unwrapped_x.front(),
                r.truth[i].unwrapped_x[static_cast<std::size_t>(tracks[i].points.back().t_index)] -
                    r.truth[i].unwrapped_x[static_cast<std::size_t>(tracks[i].points.front().t_index)],
                1.0);
  }
}

TEST(SampleTrack, InterpolatesGaps) {
  WaveTrack t;
  t.points = {{0, 0.0, 1}, {2, 4.0, 1}, {3, 6.0, 1}};
  t.unwrapped_x = {0.0, 4.0, 6.0};
  const Eigen::VectorXd s = sample_track(t, 0, 3);
  EXPECT_EQ(s.size(), 4);
  EXPECT_DOUBLE_EQ(s(1), 2.0);
  EXPECT_THROW(sample_track(t, 0, 4), Error);
}

TEST(TrackCsv, RoundTrip) {
  test::TempDir dir("tracks");
  const SynthResult r = synth_field(test::spec(60, 30, {gaussian(50, 3.3), gaussian(10, -1.1)}));
  save_tracks(r.truth, dir / "t.csv");
  const auto back = load_tracks(dir / "t.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(test::slurp(dir / "t.csv").substr(0, 31), "label,t_index,x_index,unwrapped");
  for (std::size_t i = 0; i < 2; ++i) {
    ASSERT_EQ(back[i].points.size(), 30u);
    for (std::size_t j = 0; j < 30; ++j) {
      EXPECT_EQ(back[i].points[j].x_index, r.truth[i].points[j].x_index);
      EXPECT_EQ(back[i].unwrapped_x[j], r.truth[i].unwrapped_x[j]);
    }
  }
}
