#include "rdrom/linear_models.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <numbers>

#include "rdrom/error.hpp"
#include "rdrom/spectrum.hpp"
#include "rdrom/tracking.hpp"

namespace rdrom {

Eigen::VectorXcd DmdModel::continuous_eigenvalues() const {
  return eigenvalues.unaryExpr([this](std::complex<double> l) { return std::log(l) / dt; });
}

Eigen::VectorXd DmdModel::state(int k) const {
  require(k >= 0, "DmdModel::state: k must be >= 0");
  const Eigen::VectorXcd scaled =
      amplitudes.cwiseProduct(eigenvalues.unaryExpr([k](std::complex<double> l) { return std::pow(l, k); }));
  return (modes * scaled).real();
}

DmdModel exact_dmd(const Eigen::MatrixXd& snapshots, double dt, std::optional<Eigen::Index> rank) {
  require(dt > 0.0, "exact_dmd: dt must be > 0");
  const Eigen::Index n = snapshots.rows(), t = snapshots.cols();
  require(t >= 2, "exact_dmd: need at least 2 snapshots");
  require(n >= 1, "exact_dmd: empty state");
  if (!snapshots.allFinite()) fail(ErrorCode::Numerical, "exact_dmd: data is not finite");
  const Eigen::Index limit = std::min(n, t - 1);
  if (rank && (*rank < 1 || *rank > limit))
    fail(ErrorCode::InvalidArgument,
         "exact_dmd: rank " + std::to_string(*rank) + " outside [1, " + std::to_string(limit) + "]");

  const Eigen::MatrixXd X = snapshots.leftCols(t - 1);
  const Eigen::MatrixXd Xp = snapshots.rightCols(t - 1);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) fail(ErrorCode::InvalidArgument, "exact_dmd: snapshot matrix is zero");
  Eigen::Index r = rank.value_or(limit);
  while (r > 1 && s(r - 1) <= 1e-12 * s(0)) --r;

  const Eigen::MatrixXd U = svd.matrixU().leftCols(r);
  const Eigen::MatrixXd VSinv = svd.matrixV().leftCols(r) * s.head(r).cwiseInverse().asDiagonal();
  const Eigen::MatrixXd XpVSinv = Xp * VSinv;
  const Eigen::MatrixXd Atilde = U.transpose() * XpVSinv;
  Eigen::EigenSolver<Eigen::MatrixXd> eig(Atilde);
  if (eig.info() != Eigen::Success) fail(ErrorCode::Numerical, "exact_dmd: eigendecomposition failed");

  DmdModel model;
  model.dt = dt;
  model.eigenvalues = eig.eigenvalues();
  model.modes = XpVSinv.cast<std::complex<double>>() * eig.eigenvectors();
  // A zero eigenvalue gives a zero exact mode; use the projected mode instead.
  for (Eigen::Index j = 0; j < r; ++j)
    if (model.modes.col(j).norm() <= 1e-14 * XpVSinv.norm())
      model.modes.col(j) = U.cast<std::complex<double>>() * eig.eigenvectors().col(j);
  const Eigen::VectorXcd u0 = snapshots.col(0).cast<std::complex<double>>();
  model.amplitudes = model.modes.colPivHouseholderQr().solve(u0);
  return model;
}

DmdModel exact_dmd(const Field& field, std::optional<Eigen::Index> rank) {
  return exact_dmd(Eigen::MatrixXd(field.values().transpose()), field.dt(), rank);
}

DmdModel exact_dmd_series(const Eigen::VectorXd& series, double dt, int delays,
                          std::optional<Eigen::Index> rank) {
  require(delays >= 1, "exact_dmd_series: delays must be >= 1");
  const Eigen::Index cols = series.size() - delays + 1;
  require(cols >= 2, "exact_dmd_series: series too short for the embedding");
  Eigen::MatrixXd hankel(delays, cols);
  for (int d = 0; d < delays; ++d) hankel.row(d) = series.segment(d, cols).transpose();
  return exact_dmd(hankel, dt, rank);
}

Eigen::MatrixXd dmd_forecast(const DmdModel& model, int k_max) {
  require(k_max >= 0, "dmd_forecast: k_max must be >= 0");
  Eigen::MatrixXd out(model.modes.rows(), k_max + 1);
  Eigen::VectorXcd coeff = model.amplitudes;
  for (int k = 0; k <= k_max; ++k) {
    out.col(k) = (model.modes * coeff).real();
    coeff = coeff.cwiseProduct(model.eigenvalues);
  }
  return out;
}

std::string dmd_model_to_json(const DmdModel& model) {
  using nlohmann::json;
  auto cplx = [](const Eigen::VectorXcd& v) {
    json arr = json::array();
    for (const auto& c : v) arr.push_back({c.real(), c.imag()});
    return arr;
  };
  json j = {{"dt", model.dt},
            {"rank", model.rank()},
            {"eigenvalues", cplx(model.eigenvalues)},
            {"continuous_eigenvalues", cplx(model.continuous_eigenvalues())},
            {"amplitudes", cplx(model.amplitudes)}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------

double OscillatorFit::operator()(double t) const {
  return amplitude * std::exp(growth * t) * std::cos(frequency * t + phase);
}

namespace {

struct OscParams {
  double a, g, f, p;
};

double wrap_phase(double p) {
  p = std::remainder(p, 2.0 * std::numbers::pi);
  return p <= -std::numbers::pi ? p + 2.0 * std::numbers::pi : p;
}

double envelope_slope(const Eigen::VectorXd& x, const Eigen::VectorXd& t) {
  // Local maxima of |x| carry the envelope.
  std::vector<double> ts, ls;
  for (Eigen::Index i = 1; i + 1 < x.size(); ++i) {
    const double v = std::abs(x(i));
    if (v > 0.0 && v >= std::abs(x(i - 1)) && v > std::abs(x(i + 1))) {
      ts.push_back(t(i));
      ls.push_back(std::log(v));
    }
  }
  if (ts.size() < 2) return 0.0;
  const Eigen::Map<Eigen::VectorXd> tv(ts.data(), static_cast<Eigen::Index>(ts.size()));
  const Eigen::Map<Eigen::VectorXd> lv(ls.data(), static_cast<Eigen::Index>(ls.size()));
  const double tm = tv.mean(), lm = lv.mean();
  const double var = (tv.array() - tm).square().sum();
  if (var <= 0.0) return 0.0;
  return ((tv.array() - tm) * (lv.array() - lm)).sum() / var;
}

}  // namespace

OscillatorFit fit_oscillator(const Eigen::VectorXd& x, double dt, const OscillatorOptions& options) {
  require(x.size() >= 8, "fit_oscillator: need at least 8 samples");
  require(dt > 0.0, "fit_oscillator: dt must be > 0");
  if (!x.allFinite()) fail(ErrorCode::Numerical, "fit_oscillator: series is not finite");
  const Eigen::Index n = x.size();
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, 0.0, static_cast<double>(n - 1) * dt);

  OscillatorFit fit;
  if (x.cwiseAbs().maxCoeff() == 0.0) {
    fit.converged = true;
    return fit;
  }

  OscParams p{};
  p.f = dominant_frequency(x, dt);
  p.g = envelope_slope(x, t);
  {
    Eigen::MatrixXd basis(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double e = std::exp(p.g * t(i));
      basis(i, 0) = e * std::cos(p.f * t(i));
      basis(i, 1) = -e * std::sin(p.f * t(i));
    }
    const Eigen::Vector2d c = basis.colPivHouseholderQr().solve(x);
    p.a = std::hypot(c(0), c(1));
    p.p = std::atan2(c(1), c(0));
  }

  auto residuals = [&](const OscParams& q, Eigen::VectorXd& r) {
    r = (q.a * (q.g * t.array()).exp() * (q.f * t.array() + q.p).cos()).matrix() - x;
    return r.squaredNorm();
  };
  Eigen::VectorXd r;
  double cost = residuals(p, r);
  double damping = 1e-3;
  Eigen::MatrixXd J(n, 4);
  for (int iter = 1; iter <= options.max_iter; ++iter) {
    fit.iterations = iter;
    const Eigen::ArrayXd e = (p.g * t.array()).exp();
    const Eigen::ArrayXd c = (p.f * t.array() + p.p).cos();
    const Eigen::ArrayXd s = (p.f * t.array() + p.p).sin();
    J.col(0) = (e * c).matrix();
    J.col(1) = (p.a * t.array() * e * c).matrix();
    J.col(2) = (-p.a * t.array() * e * s).matrix();
    J.col(3) = (-p.a * e * s).matrix();
    const Eigen::Matrix4d JtJ = J.transpose() * J;
    const Eigen::Vector4d grad = J.transpose() * r;
    bool accepted = false;
    double new_cost = cost;
    for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
      Eigen::Matrix4d lhs = JtJ;
      lhs.diagonal() += damping * JtJ.diagonal().cwiseMax(1e-300);
      const Eigen::Vector4d step = lhs.ldlt().solve(-grad);
      const OscParams trial{p.a + step(0), p.g + step(1), p.f + step(2), p.p + step(3)};
      Eigen::VectorXd tr;
      const double tc = residuals(trial, tr);
      if (std::isfinite(tc) && tc <= cost) {
        accepted = true;
        new_cost = tc;
        p = trial;
        r = std::move(tr);
        damping = std::max(damping / 3.0, 1e-12);
      } else {
        damping *= 4.0;
      }
    }
    if (!accepted) {
      fit.converged = true;  // no descent direction left at this precision
      break;
    }
    const double decrease = cost - new_cost;
    cost = new_cost;
    if (decrease <= options.tol * std::max(cost, 1e-300) || cost == 0.0) {
      fit.converged = true;
      break;
    }
  }

  if (p.a < 0.0) {
    p.a = -p.a;
    p.p += std::numbers::pi;
  }
  if (p.f < 0.0) {
    p.f = -p.f;
    p.p = -p.p;
  }
  fit.amplitude = p.a;
  fit.growth = p.g;
  fit.frequency = p.f;
  fit.phase = wrap_phase(p.p);
  fit.residual = std::sqrt(cost / static_cast<double>(n));
  return fit;
}

std::string oscillator_fit_to_json(const OscillatorFit& fit) {
  nlohmann::json j = {{"amplitude", fit.amplitude}, {"growth", fit.growth},
                      {"frequency", fit.frequency}, {"phase", fit.phase},
                      {"rms_residual", fit.residual}, {"iterations", fit.iterations},
                      {"converged", fit.converged}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------

SeparationSeries wave_separation(const WaveTrack& a, const WaveTrack& b) {
  require(!a.points.empty() && !b.points.empty(), "wave_separation: empty track");
  require(a.unwrapped_x.size() == a.points.size() && b.unwrapped_x.size() == b.points.size(),
          "wave_separation: tracks must be unwrapped");
  const int first = std::max(a.points.front().t_index, b.points.front().t_index);
  const int last = std::min(a.points.back().t_index, b.points.back().t_index);
  require(last - first + 1 >= 2, "wave_separation: tracks overlap in fewer than 2 time steps");
  SeparationSeries out;
  out.first_t = first;
  out.values = sample_track(a, first, last) - sample_track(b, first, last);
  out.mean = out.values.mean();
  out.values.array() -= out.mean;
  return out;
}

Eigen::VectorXd finite_difference(const Eigen::VectorXd& x, double dt) {
  require(x.size() >= 2, "finite_difference: need at least 2 samples");
  require(dt > 0.0, "finite_difference: dt must be > 0");
  const Eigen::Index n = x.size();
  Eigen::VectorXd d(n);
  d(0) = (x(1) - x(0)) / dt;
  d(n - 1) = (x(n - 1) - x(n - 2)) / dt;
  for (Eigen::Index i = 1; i + 1 < n; ++i) d(i) = (x(i + 1) - x(i - 1)) / (2.0 * dt);
  return d;
}

}  // namespace rdrom
