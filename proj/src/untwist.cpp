#include "rdrom/untwist.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <set>

#include "rdrom/error.hpp"
#include "rdrom/numfmt.hpp"

namespace rdrom {

FunctionLibrary::FunctionLibrary(std::vector<LibraryTerm> terms) : terms_(std::move(terms)) {
  require(!terms_.empty(), "function library is empty");
  std::set<std::string> seen;
  for (const auto& t : terms_) {
    require(static_cast<bool>(t.f), "library term '" + t.name + "' has no function");
    require(seen.insert(t.name).second, "duplicate library term name '" + t.name + "'");
  }
}

std::vector<std::string> FunctionLibrary::names() const {
  std::vector<std::string> out;
  for (const auto& t : terms_) out.push_back(t.name);
  return out;
}

Eigen::RowVectorXd FunctionLibrary::evaluate(double t) const {
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(terms_.size()));
  for (std::size_t j = 0; j < terms_.size(); ++j) row(static_cast<Eigen::Index>(j)) = terms_[j].f(t);
  return row;
}

FunctionLibrary build_library(const LibraryRequest& request) {
  require(!request.kinds.empty(), "build_library: no term kinds requested");
  auto has = [&](TermKind k) {
    return std::find(request.kinds.begin(), request.kinds.end(), k) != request.kinds.end();
  };
  std::vector<LibraryTerm> terms;
  const bool polynomial = has(TermKind::Polynomial);
  if (polynomial) require(request.polynomial_degree >= 2, "build_library: polynomial degree must be >= 2");
  if (has(TermKind::Constant) || has(TermKind::Linear) || polynomial)
    terms.push_back({"1", TermKind::Constant, {}, [](double) { return 1.0; }});
  if (has(TermKind::Linear) || polynomial)
    terms.push_back({"t", TermKind::Linear, {}, [](double t) { return t; }});
  if (polynomial)
    for (int p = 2; p <= request.polynomial_degree; ++p)
      terms.push_back({"t^" + std::to_string(p), TermKind::Polynomial, {static_cast<double>(p)},
                       [p](double t) { return std::pow(t, p); }});
  if (has(TermKind::Sine)) {
    require(!request.sine_frequencies.empty(), "build_library: sine requested with an empty frequency grid");
    for (double w : request.sine_frequencies) {
      const std::string arg = "(" + format_double(w) + "t)";
      terms.push_back({"sin" + arg, TermKind::Sine, {w}, [w](double t) { return std::sin(w * t); }});
      terms.push_back({"cos" + arg, TermKind::Sine, {w}, [w](double t) { return std::cos(w * t); }});
    }
  }
  if (has(TermKind::Exponential)) {
    require(!request.exp_rates.empty(), "build_library: exp requested with an empty rate grid");
    for (double r : request.exp_rates)
      terms.push_back({"exp(" + format_double(r) + "t)", TermKind::Exponential, {r},
                       [r](double t) { return std::exp(r * t); }});
  }
  return FunctionLibrary(std::move(terms));
}

FunctionLibrary linear_library() {
  LibraryRequest request;
  request.kinds = {TermKind::Linear};
  return build_library(request);
}

// ---------------------------------------------------------------------------

std::vector<int> SpeedModel::active_terms(int wave) const {
  std::vector<int> out;
  for (Eigen::Index j = 0; j < B.rows(); ++j)
    if (B(j, wave) != 0.0) out.push_back(static_cast<int>(j));
  return out;
}

namespace {

double prox(double c, double threshold, Regularizer reg) {
  if (reg == Regularizer::L1) {
    const double a = std::abs(c) - threshold;
    return a > 0.0 ? std::copysign(a, c) : 0.0;
  }
  return std::abs(c) > threshold ? c : 0.0;
}

}  // namespace

SpeedModel fit_sr3(const std::vector<WaveTrack>& tracks, const FunctionLibrary& library,
                   double dt, const Sr3Options& options) {
  require(!tracks.empty(), "fit_sr3: no tracks");
  require(options.zeta > 0.0, "fit_sr3: zeta must be > 0");
  require(options.max_iter >= 1, "fit_sr3: max_iter must be >= 1");
  require(!options.lambda || *options.lambda >= 0.0, "fit_sr3: lambda must be >= 0");
  const auto m = static_cast<Eigen::Index>(library.size());
  const auto n_waves = static_cast<Eigen::Index>(tracks.size());

  Eigen::Index n_points = 0;
  for (const auto& track : tracks) {
    if (static_cast<Eigen::Index>(track.points.size()) < m)
      fail(ErrorCode::InvalidArgument,
           "fit_sr3: track " + std::to_string(track.label) + " has " +
               std::to_string(track.points.size()) + " points but the library has " +
               std::to_string(m) + " terms");
    require(track.unwrapped_x.size() == track.points.size(),
            "fit_sr3: track " + std::to_string(track.label) + " is not unwrapped");
    n_points += static_cast<Eigen::Index>(track.points.size());
  }

  Eigen::MatrixXd T(n_points, m);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(n_points, n_waves);
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n_points, n_waves);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> ranges;
  Eigen::Index row = 0;
  for (Eigen::Index w = 0; w < n_waves; ++w) {
    const auto& track = tracks[static_cast<std::size_t>(w)];
    ranges.emplace_back(row, static_cast<Eigen::Index>(track.points.size()));
    for (std::size_t i = 0; i < track.points.size(); ++i, ++row) {
      T.row(row) = library.evaluate(track.points[i].t_index * dt);
      X(row, w) = track.unwrapped_x[i];
      W(row, w) = 1.0;
    }
  }
  if (!T.allFinite()) fail(ErrorCode::Numerical, "fit_sr3: library is not finite on the data's time range");

  Eigen::VectorXd norms = T.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < m; ++j)
    if (!(norms(j) > 0.0))
      fail(ErrorCode::InvalidArgument, "fit_sr3: library term '" + library[static_cast<std::size_t>(j)].name +
                                           "' is identically zero on the data");
  const Eigen::MatrixXd Ts = T * norms.cwiseInverse().asDiagonal();

  std::vector<Eigen::MatrixXd> grams;
  std::vector<Eigen::VectorXd> rhs;
  double max_corr = 0.0;
  for (Eigen::Index w = 0; w < n_waves; ++w) {
    const auto [start, count] = ranges[static_cast<std::size_t>(w)];
    const auto Tw = Ts.middleRows(start, count);
    grams.push_back(Tw.transpose() * Tw);
    rhs.push_back(Tw.transpose() * X.col(w).segment(start, count));
    max_corr = std::max(max_corr, rhs.back().cwiseAbs().maxCoeff());

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Tw);
    qr.setThreshold(1e-12);
    if (qr.rank() < m && 1.0 / options.zeta < 1e-12)
      fail(ErrorCode::InvalidArgument,
           "fit_sr3: library matrix is rank deficient on wave " + std::to_string(w) +
               " and zeta is effectively infinite; use a smaller zeta to regularise the C-update");
  }

  const double lambda = options.lambda ? *options.lambda : 1e-3 * max_corr;
  const double inv_zeta = 1.0 / options.zeta;
  const double threshold = options.regularizer == Regularizer::L1
                               ? lambda * options.zeta
                               : std::sqrt(2.0 * lambda * options.zeta);

  std::vector<Eigen::LDLT<Eigen::MatrixXd>> solvers;
  for (const auto& g : grams)
    solvers.emplace_back(g + inv_zeta * Eigen::MatrixXd::Identity(m, m));

  Eigen::MatrixXd C(m, n_waves), B(m, n_waves);
  auto update_b = [&] {
    for (Eigen::Index j = 0; j < m; ++j)
      for (Eigen::Index w = 0; w < n_waves; ++w) B(j, w) = prox(C(j, w), threshold, options.regularizer);
  };
  auto objective = [&] {
    const double fit = 0.5 * (W.cwiseProduct(X - Ts * C)).squaredNorm();
    const double penalty = options.regularizer == Regularizer::L1
                               ? B.cwiseAbs().sum()
                               : static_cast<double>((B.array() != 0.0).count());
    return fit + lambda * penalty + 0.5 * inv_zeta * (C - B).squaredNorm();
  };

  for (Eigen::Index w = 0; w < n_waves; ++w) C.col(w) = solvers[static_cast<std::size_t>(w)].solve(rhs[static_cast<std::size_t>(w)]);
  update_b();

  SpeedModel model;
  model.term_names = library.names();
  model.lambda = lambda;
  model.zeta = options.zeta;
  model.regularizer = options.regularizer;
  model.objective_history.push_back(objective());

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const Eigen::MatrixXd previous = C;
    for (Eigen::Index w = 0; w < n_waves; ++w)
      C.col(w) = solvers[static_cast<std::size_t>(w)].solve(rhs[static_cast<std::size_t>(w)] + inv_zeta * B.col(w));
    update_b();
    const double value = objective();
    const double decrease = model.objective_history.back() - value;
    model.objective_history.push_back(value);
    model.iterations = iter;
    if (!std::isfinite(value)) fail(ErrorCode::Numerical, "fit_sr3: objective is not finite");
    const double step = (C - previous).norm();
    if (decrease < options.tol * std::max(1.0, std::abs(value)) &&
        step <= std::sqrt(options.tol) * std::max(1.0, C.norm())) {
      model.converged = true;
      break;
    }
  }

  model.debiased = Eigen::MatrixXd::Zero(m, n_waves);
  for (Eigen::Index w = 0; w < n_waves; ++w) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < m; ++j)
      if (B(j, w) != 0.0) support.push_back(j);
    if (support.empty()) continue;
    const auto [start, count] = ranges[static_cast<std::size_t>(w)];
    const Eigen::MatrixXd sub = Ts.middleRows(start, count)(Eigen::all, support);
    const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(X.col(w).segment(start, count));
    for (std::size_t k = 0; k < support.size(); ++k)
      model.debiased(support[k], w) = coef(static_cast<Eigen::Index>(k)) / norms(support[k]);
  }

  model.objective = model.objective_history.back();
  model.C = norms.cwiseInverse().asDiagonal() * C;
  model.B = norms.cwiseInverse().asDiagonal() * B;
  model.W = std::move(W);
  return model;
}

double model_position(const SpeedModel& model, const FunctionLibrary& library, int wave,
                      double t) {
  require(wave >= 0 && wave < model.C.cols(), "model_position: wave index out of range");
  require(static_cast<Eigen::Index>(library.size()) == model.C.rows(),
          "model_position: library does not match the model");
  return library.evaluate(t).dot(model.debiased.col(wave));
}

std::string speed_model_to_json(const SpeedModel& model, const FunctionLibrary& library) {
  using nlohmann::json;
  json terms = json::array();
  for (const auto& t : library.terms()) terms.push_back({{"name", t.name}, {"params", t.params}});
  auto matrix = [](const Eigen::MatrixXd& mtx) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < mtx.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < mtx.cols(); ++c) row.push_back(mtx(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  json active = json::array();
  for (Eigen::Index w = 0; w < model.B.cols(); ++w) {
    json names = json::array();
    for (int j : model.active_terms(static_cast<int>(w))) names.push_back(model.term_names[static_cast<std::size_t>(j)]);
    active.push_back(names);
  }
  json j = {{"terms", terms},
            {"C", matrix(model.C)},
            {"B", matrix(model.B)},
            {"debiased", matrix(model.debiased)},
            {"active_terms", active},
            {"objective", model.objective},
            {"lambda", model.lambda},
            {"zeta", model.zeta},
            {"regularizer", model.regularizer == Regularizer::L1 ? "l1" : "l0"},
            {"iterations", model.iterations},
            {"converged", model.converged}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------

Field shift_field(const Field& field, const ShiftSpec& spec) {
  require(static_cast<Eigen::Index>(spec.offsets.size()) == field.time_steps(),
          "shift_field: need one offset per time row");
  const Eigen::Index k = field.space_points();
  const auto& in = field.values();
  Eigen::MatrixXd out(in.rows(), k);
  auto wrap = [k](long long i) { return static_cast<Eigen::Index>(((i % k) + k) % k); };
  for (Eigen::Index r = 0; r < in.rows(); ++r) {
    const double o = spec.offsets[static_cast<std::size_t>(r)];
    require(std::isfinite(o), "shift_field: offsets must be finite");
    if (spec.interpolation == Interpolation::Nearest) {
      const long long s = std::llround(o);
      for (Eigen::Index x = 0; x < k; ++x) out(r, x) = in(r, wrap(x + s));
      continue;
    }
    const double base = std::floor(o);
    const double frac = o - base;
    const auto n = static_cast<long long>(base);
    for (Eigen::Index x = 0; x < k; ++x) {
      const double a = in(r, wrap(x + n));
      out(r, x) = frac == 0.0 ? a : (1.0 - frac) * a + frac * in(r, wrap(x + n + 1));
    }
  }
  return Field(std::move(out), field.dt());
}

PreprocessResult preprocess_shift(const Field& field, const PreprocessOptions& options) {
  require(options.window >= 2, "preprocess_shift: window must be >= 2");
  require(options.window <= field.time_steps(), "preprocess_shift: window exceeds the number of time steps");
  const auto& tp = options.tracking;
  const Field head = field.rows(0, options.window);
  const auto points = detect_ridges(head, tp.min_prominence, tp.min_separation);
  if (points.empty())
    fail(ErrorCode::Numerical, "preprocess_shift: no peaks detected in the first " +
                                   std::to_string(options.window) + " rows");
  auto tracks = cluster_waves(points, tp.n_waves, tp.kernel_scale, field.domain_length(), tp.cluster);
  const FunctionLibrary library = linear_library();
  SpeedModel model = fit_sr3(tracks, library, field.dt(), options.sr3);

  const double mean_speed = model.debiased.row(1).mean();
  ShiftSpec shift;
  shift.interpolation = Interpolation::Linear;
  for (Eigen::Index r = 0; r < field.time_steps(); ++r)
    shift.offsets.push_back(mean_speed * static_cast<double>(r) * field.dt());
  Field shifted = shift_field(field, shift);
  return {std::move(shifted), mean_speed, std::move(tracks), std::move(model), std::move(shift)};
}

RefineResult refine_shift(const Field& preprocessed, const FunctionLibrary& library,
                          int wave_index, const RefineOptions& options) {
  require(options.seed_window >= 2 && options.seed_window <= preprocessed.time_steps(),
          "refine_shift: seed_window out of range");
  const auto& tp = options.tracking;
  require(wave_index >= 0 && wave_index < tp.n_waves, "refine_shift: wave index out of range");
  const double length = preprocessed.domain_length();

  const auto points = detect_ridges(preprocessed, tp.min_prominence, tp.min_separation);
  std::vector<PeakPoint> head;
  for (const auto& p : points)
    if (p.t_index < options.seed_window) head.push_back(p);
  if (head.empty())
    fail(ErrorCode::Numerical, "refine_shift: no peaks detected in the seed window");
  const auto seeds = cluster_waves(head, tp.n_waves, tp.kernel_scale, length, tp.cluster);
  auto tracks = link_tracks(points, seeds, length, options.link);
  SpeedModel model = fit_sr3(tracks, library, preprocessed.dt(), options.sr3);

  ShiftSpec shift;
  shift.interpolation = Interpolation::Linear;
  const double origin = model_position(model, library, wave_index, 0.0);
  for (Eigen::Index r = 0; r < preprocessed.time_steps(); ++r)
    shift.offsets.push_back(
        model_position(model, library, wave_index, static_cast<double>(r) * preprocessed.dt()) - origin);
  Field shifted = shift_field(preprocessed, shift);
  return {std::move(shifted), std::move(tracks), std::move(model), std::move(shift)};
}

}  // namespace rdrom
