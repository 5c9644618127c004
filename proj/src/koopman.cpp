#include "rdrom/koopman.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <nlohmann/json.hpp>

#include "rdrom/decomposition.hpp"
#include "rdrom/error.hpp"
#include "rdrom/spectrum.hpp"

namespace rdrom {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

Eigen::VectorXd oscillator_features(const Eigen::VectorXd& omegas, double t) {
  const Eigen::Index n = omegas.size();
  Eigen::VectorXd f(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    f(i) = std::cos(omegas(i) * t);
    f(n + i) = std::sin(omegas(i) * t);
  }
  return f;
}

Eigen::MatrixXd oscillator_features(const Eigen::VectorXd& omegas, const Eigen::VectorXd& times) {
  Eigen::MatrixXd f(2 * omegas.size(), times.size());
  for (Eigen::Index j = 0; j < times.size(); ++j) f.col(j) = oscillator_features(omegas, times(j));
  return f;
}

// ---------------------------------------------------------------------------

FreqSearchResult aggregate_phase_samples(const Eigen::MatrixXd& samples, const Eigen::VectorXd& times,
                                         int horizon, const FreqSearchOptions& options) {
  const Eigen::Index S = samples.cols();
  require(S >= 2, "frequency search: need at least 2 samples per period");
  require(samples.rows() == times.size(), "frequency search: one sample row per time is required");
  require(horizon >= 1 && options.grid_factor >= 1, "frequency search: invalid grid size");
  require(options.omega_max > options.omega_min, "frequency search: empty frequency range");
  if (!samples.allFinite()) fail(ErrorCode::Numerical, "frequency search: local losses are not finite");

  const double step = std::numbers::pi / (static_cast<double>(options.grid_factor) * horizon);
  const auto G = static_cast<Eigen::Index>(std::ceil((options.omega_max - options.omega_min) / step - 1e-9));

  // Trigonometric interpolation coefficients of each row.
  const Eigen::Index M = S / 2;
  Eigen::MatrixXcd coeff(samples.rows(), M + 1);
  for (Eigen::Index m = 0; m <= M; ++m) {
    Eigen::VectorXcd basis(S);
    for (Eigen::Index s = 0; s < S; ++s) basis(s) = std::polar(1.0 / static_cast<double>(S), -kTwoPi * m * s / S);
    coeff.col(m) = samples.cast<std::complex<double>>() * basis;
  }
  // Interior harmonics appear twice in the real interpolant; the Nyquist
  // harmonic (even S) once.
  for (Eigen::Index m = 1; m <= M; ++m)
    if (!(S % 2 == 0 && m == M)) coeff.col(m) *= 2.0;
  const double constant = coeff.col(0).real().sum();

  FreqSearchResult out;
  out.grid.resize(G);
  out.aggregate.resize(G);
  for (Eigen::Index g = 0; g < G; ++g) {
    const double omega = options.omega_min + static_cast<double>(g) * step;
    double total = constant;
    for (Eigen::Index j = 0; j < times.size(); ++j) {
      const std::complex<double> base = std::polar(1.0, std::fmod(omega * times(j), kTwoPi));
      std::complex<double> rot = base;
      for (Eigen::Index m = 1; m <= M; ++m) {
        total += (coeff(j, m) * rot).real();
        rot *= base;
      }
    }
    out.grid(g) = omega;
    out.aggregate(g) = total;
  }
  Eigen::Index best = 0;
  out.aggregate.minCoeff(&best);
  out.omega = out.grid(best);
  out.value = out.aggregate(best);
  return out;
}

FreqSearchResult global_freq_search(const std::function<double(int, double)>& loss, int time_steps,
                                    const FreqSearchOptions& options) {
  require(time_steps >= 1, "global_freq_search: time_steps must be >= 1");
  const int S = options.samples_per_period;
  require(S >= 2, "global_freq_search: samples_per_period must be >= 2");
  Eigen::MatrixXd samples(time_steps, S);
  Eigen::VectorXd times(time_steps);
  for (int t = 0; t < time_steps; ++t) {
    times(t) = t;
    if (t == 0) {
      samples.row(0).setConstant(loss(0, 0.0));
      continue;
    }
    for (int s = 0; s < S; ++s) samples(t, s) = loss(t, kTwoPi * s / (static_cast<double>(S) * t));
  }
  return aggregate_phase_samples(samples, times, time_steps, options);
}

// ---------------------------------------------------------------------------

namespace {

using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct TrainState {
  Eigen::VectorXd params;
  Eigen::VectorXd velocity;
  Eigen::VectorXd grad;
  double loss = 0.0;
  double backoff = 1.0;

  void reset(const Objective& objective, int epoch) {
    loss = objective(params, &grad);
    if (!std::isfinite(loss) || !grad.allFinite())
      fail(ErrorCode::Numerical, "training diverged at epoch " + std::to_string(epoch));
    velocity = Eigen::VectorXd::Zero(params.size());
  }
};

void validate(const TrainSchedule& s) {
  require(s.epochs >= 0, "training: epochs must be >= 0");
  require(s.learning_rate > 0.0, "training: learning rate must be > 0");
  require(s.momentum >= 0.0 && s.momentum < 1.0, "training: momentum must be in [0, 1)");
  require(s.decay_every >= 1 && s.decay > 0.0 && s.decay <= 1.0, "training: invalid decay schedule");
  require(s.freq_every >= 0, "training: freq_every must be >= 0");
}

void run_epochs(TrainState& st, const Objective& objective, const TrainSchedule& s, int first, int count,
                std::vector<double>& history) {
  Eigen::VectorXd trial_grad;
  for (int e = first; e < first + count; ++e) {
    const double lr = s.learning_rate * std::pow(s.decay, e / s.decay_every) * st.backoff;
    st.velocity = s.momentum * st.velocity - lr * st.grad;
    const Eigen::VectorXd trial = st.params + st.velocity;
    const double value = objective(trial, &trial_grad);
    if (std::isfinite(value) && trial_grad.allFinite() && value <= st.loss) {
      st.params = trial;
      st.loss = value;
      st.grad = trial_grad;
      st.backoff = std::min(1.0, st.backoff * 1.05);
    } else {
      st.velocity.setZero();
      st.backoff *= 0.5;
    }
    history.push_back(st.loss);
  }
}

// Minimises f on [lo, hi] by golden-section search, returning (x, f(x)).
std::pair<double, double> golden_section(const std::function<double(double)>& f, double lo, double hi,
                                         int iterations = 40) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < iterations; ++i) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return fc <= fd ? std::make_pair(c, fc) : std::make_pair(d, fd);
}

double wrap_into(double omega, const FreqSearchOptions& o) {
  const double span = o.omega_max - o.omega_min;
  double w = std::fmod(omega - o.omega_min, span);
  if (w < 0.0) w += span;
  return o.omega_min + w;
}

// One coordinate update: global search on the aggregated local losses, then
// a golden-section polish on the exact loss. Returns the accepted frequency
// or nothing when the exact loss does not improve.
std::optional<double> coordinate_update(const FreqSearchResult& search, const FreqSearchOptions& o,
                                        int horizon, const std::function<double(double)>& exact,
                                        double current_loss) {
  const double step = std::numbers::pi / (static_cast<double>(o.grid_factor) * horizon);
  const double lo = std::max(o.omega_min, search.omega - step);
  const double hi = std::min(o.omega_max, search.omega + step);
  auto [omega, value] = golden_section(exact, lo, hi);
  const double at_grid = exact(search.omega);
  if (at_grid < value) {
    omega = search.omega;
    value = at_grid;
  }
  if (value < current_loss) return omega;
  return std::nullopt;
}

std::pair<double, double> standardisation(const Eigen::MatrixXd& values) {
  const double mean = values.mean();
  const double var = (values.array() - mean).square().mean();
  const double scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return {mean, scale};
}

std::optional<double> safe_variance_explained(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
  try {
    return variance_explained(truth, pred);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UndefinedMetric) return std::nullopt;
    throw;
  }
}

void check_search(const FreqSearchOptions& o) {
  require(o.samples_per_period >= 2, "frequency search: samples_per_period must be >= 2");
  require(o.grid_factor >= 1, "frequency search: grid_factor must be >= 1");
  require(o.omega_max > o.omega_min, "frequency search: empty frequency range");
}

}  // namespace

// ---------------------------------------------------------------------------

KoopmanForecastModel fit_koopman_forecast(const Field& field, const KoopmanForecastOptions& options) {
  require(options.n_freq >= 1, "fit_koopman_forecast: n_freq must be >= 1");
  require(options.train_fraction > 0.0 && options.train_fraction <= 1.0,
          "fit_koopman_forecast: train_fraction must be in (0, 1]");
  for (int h : options.hidden) require(h >= 1, "fit_koopman_forecast: hidden sizes must be >= 1");
  validate(options.schedule);
  check_search(options.search);

  const auto K = static_cast<int>(field.space_points());
  const auto T = static_cast<int>(field.time_steps());
  const int n_train = std::clamp(static_cast<int>(std::lround(T * options.train_fraction)), 2, T);
  const int n = options.n_freq;

  const Eigen::MatrixXd train = field.values().topRows(n_train);
  const auto [offset, scale] = standardisation(train);
  const Eigen::MatrixXd Y = ((train.array() - offset) / scale).matrix().transpose();  // K x N
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(n_train, 0.0, n_train - 1.0);
  const double norm = 1.0 / (static_cast<double>(n_train) * K);

  // Initial frequencies from the spectra of the leading POD coefficients.
  Eigen::VectorXd omegas(n);
  {
    std::vector<double> found;
    const double resolution = kTwoPi / n_train;
    const ModalDecomposition modes = pod(Y, std::min<Eigen::Index>(2 * n, std::min(K, n_train)));
    for (Eigen::Index r = 0; r < modes.rank() && static_cast<int>(found.size()) < n; ++r) {
      if (modes.singular_values(r) <= 1e-12 * std::max(1.0, modes.singular_values(0))) break;
      for (double w : spectral_peaks(Eigen::VectorXd(modes.time_coeffs.row(r).transpose()), 1.0, n)) {
        w = std::clamp(w, options.search.omega_min, std::nextafter(options.search.omega_max, 0.0));
        if (std::all_of(found.begin(), found.end(), [&](double f) { return std::abs(f - w) > resolution; }))
          found.push_back(w);
        if (static_cast<int>(found.size()) == n) break;
      }
    }
    for (int i = static_cast<int>(found.size()); i < n; ++i)
      found.push_back(options.search.omega_min +
                      (options.search.omega_max - options.search.omega_min) * (i + 1) / (n + 1));
    for (int i = 0; i < n; ++i) omegas(i) = found[static_cast<std::size_t>(i)];
  }

  std::vector<int> sizes{2 * n};
  sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
  sizes.push_back(K);
  FeedForwardNet net(sizes, options.seed);

  Eigen::MatrixXd features = oscillator_features(omegas, times);
  FeedForwardNet::Trace trace;
  const Objective objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
    net.set_parameters(p);
    const Eigen::MatrixXd residual = net.forward(features, trace) - Y;
    const double loss = residual.squaredNorm() * norm;
    if (grad) *grad = net.backward(trace, 2.0 * norm * residual).parameters;
    return loss;
  };
  auto loss_with = [&](const Eigen::VectorXd& w) {
    return (net.forward(oscillator_features(w, times)) - Y).squaredNorm() * norm;
  };

  KoopmanForecastModel model{omegas, net, offset, scale, field.dt(), n_train, T, {}, {}, {}};
  TrainState st;
  st.params = net.parameters();
  st.reset(objective, 0);

  const TrainSchedule& s = options.schedule;
  const int chunk = s.freq_every > 0 ? s.freq_every : std::max(1, s.epochs);
  for (int epoch = 0; epoch < s.epochs;) {
    const int count = std::min(chunk, s.epochs - epoch);
    run_epochs(st, objective, s, epoch, count, model.loss_history);
    epoch += count;
    if (s.freq_every == 0 || epoch >= s.epochs) continue;

    net.set_parameters(st.params);
    bool changed = false;
    const int S = options.search.samples_per_period;
    for (int i = 0; i < n; ++i) {
      Eigen::MatrixXd samples(n_train, S);
      Eigen::MatrixXd probe = features;
      for (int p = 0; p < S; ++p) {
        const double phase = kTwoPi * p / S;
        probe.row(i).setConstant(std::cos(phase));
        probe.row(n + i).setConstant(std::sin(phase));
        samples.col(p) = ((net.forward(probe) - Y).colwise().squaredNorm() * norm).transpose();
      }
      const FreqSearchResult search = aggregate_phase_samples(samples, times, n_train, options.search);
      const auto exact = [&](double w) {
        Eigen::VectorXd trial = omegas;
        trial(i) = w;
        return loss_with(trial);
      };
      if (auto w = coordinate_update(search, options.search, n_train, exact, st.loss)) {
        omegas(i) = *w;
        features = oscillator_features(omegas, times);
        st.reset(objective, epoch);
        changed = true;
      }
    }
    if (changed && !model.loss_history.empty()) model.loss_history.back() = st.loss;
  }

  net.set_parameters(st.params);
  model.omegas = omegas;
  model.decoder = net;
  const Eigen::MatrixXd fitted = forecast(model, 0, T);
  model.train_variance_explained = safe_variance_explained(train, fitted.topRows(n_train));
  if (n_train < T)
    model.test_variance_explained =
        safe_variance_explained(field.values().bottomRows(T - n_train), fitted.bottomRows(T - n_train));
  return model;
}

Eigen::MatrixXd forecast(const KoopmanForecastModel& model, int first, int count) {
  require(first >= 0, "forecast: first time index must be >= 0");
  require(count >= 1, "forecast: count must be >= 1");
  const Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(count, first, first + count - 1.0);
  const Eigen::MatrixXd out = model.decoder.forward(oscillator_features(model.omegas, times));
  return ((out.array() * model.scale) + model.offset).matrix().transpose();
}

namespace {

nlohmann::json net_json(const FeedForwardNet& net) {
  const Eigen::VectorXd p = net.parameters();
  return {{"layer_sizes", net.layer_sizes()},
          {"activation", "tanh"},
          {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace

std::string koopman_forecast_to_json(const KoopmanForecastModel& model) {
  nlohmann::json j = {
      {"omegas", std::vector<double>(model.omegas.data(), model.omegas.data() + model.omegas.size())},
      {"decoder", net_json(model.decoder)},
      {"offset", model.offset},
      {"scale", model.scale},
      {"dt", model.dt},
      {"train_steps", model.train_steps},
      {"total_steps", model.total_steps},
      {"final_loss", model.loss_history.empty() ? nlohmann::json(nullptr) : nlohmann::json(model.loss_history.back())},
      {"train_variance_explained", optional_json(model.train_variance_explained)},
      {"test_variance_explained", optional_json(model.test_variance_explained)}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------

namespace {

// Phase 2 pi x / K - w t reduced to [0, 2 pi) through whole turns.
double mode_phase(double x, double t, double omega, int K) {
  double turns = x / K - omega * t / kTwoPi;
  turns -= std::floor(turns);
  return kTwoPi * turns;
}

Eigen::MatrixXd embed(const Eigen::VectorXd& phases) {
  Eigen::MatrixXd in(2, phases.size());
  in.row(0) = phases.array().sin().matrix().transpose();
  in.row(1) = phases.array().cos().matrix().transpose();
  return in;
}

}  // namespace

double ModalKoopmanModel::speed(int mode) const {
  require(mode >= 0 && mode < n_modes(), "ModalKoopmanModel: mode index out of range");
  return omegas(mode) * space_points / kTwoPi;
}

double ModalKoopmanModel::mode_value(int mode, double x, double t) const {
  require(mode >= 0 && mode < n_modes(), "ModalKoopmanModel: mode index out of range");
  Eigen::VectorXd phase(1);
  phase(0) = mode_phase(x, t, omegas(mode), space_points);
  const double g = mode_nets[static_cast<std::size_t>(mode)].forward(embed(phase))(0, 0);
  return scale * g + offset / n_modes();
}

ModalKoopmanModel fit_modal_koopman(const Field& field, const ModalKoopmanOptions& options) {
  require(options.n_modes >= 1, "fit_modal_koopman: n_modes must be >= 1");
  for (int h : options.hidden) require(h >= 1, "fit_modal_koopman: hidden sizes must be >= 1");
  validate(options.schedule);
  check_search(options.search);

  const auto K = static_cast<int>(field.space_points());
  const auto T = static_cast<int>(field.time_steps());
  const int N = options.n_modes;
  const Eigen::Index npts = static_cast<Eigen::Index>(K) * T;
  const auto [offset, scale] = standardisation(field.values());
  // Points ordered t-major: index t * K + x.
  const Eigen::RowVectorXd y =
      ((field.values().array() - offset) / scale).matrix().transpose().reshaped().transpose();
  Eigen::VectorXd px(npts), pt(npts);
  for (int t = 0; t < T; ++t)
    for (int x = 0; x < K; ++x) {
      px(t * K + x) = x;
      pt(t * K + x) = t;
    }
  const double norm = 1.0 / static_cast<double>(npts);

  // Initial speeds from the temporal spectrum of the first spatial harmonic:
  // a mode m(2 pi x / K - w t) rotates that harmonic as exp(-i w t).
  Eigen::VectorXd omegas(N);
  {
    Eigen::VectorXcd harmonic(T);
    for (int t = 0; t < T; ++t) {
      std::complex<double> acc = 0.0;
      for (int x = 0; x < K; ++x) acc += (field(t, x) - offset) * std::polar(1.0, -kTwoPi * x / K);
      harmonic(t) = acc;
    }
    const auto peaks = spectral_peaks(harmonic, 1.0, N);
    for (int i = 0; i < N; ++i) {
      const double w = i < static_cast<int>(peaks.size()) ? -peaks[static_cast<std::size_t>(i)]
                                                           : kTwoPi * (i + 1) / (T * (N + 1.0));
      omegas(i) = wrap_into(w, options.search);
    }
  }

  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
  sizes.push_back(1);
  std::vector<FeedForwardNet> nets;
  for (int i = 0; i < N; ++i) nets.emplace_back(sizes, options.seed + static_cast<std::uint64_t>(i));
  const Eigen::Index per_net = nets.front().parameter_count();

  std::vector<Eigen::MatrixXd> inputs(static_cast<std::size_t>(N));
  auto rebuild_input = [&](int i) {
    Eigen::VectorXd phases(npts);
    for (Eigen::Index p = 0; p < npts; ++p) phases(p) = mode_phase(px(p), pt(p), omegas(i), K);
    inputs[static_cast<std::size_t>(i)] = embed(phases);
  };
  for (int i = 0; i < N; ++i) rebuild_input(i);

  std::vector<FeedForwardNet::Trace> traces(static_cast<std::size_t>(N));
  std::vector<Eigen::RowVectorXd> outputs(static_cast<std::size_t>(N));
  const Objective objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) {
    Eigen::RowVectorXd residual = -y;
    for (int i = 0; i < N; ++i) {
      auto& net = nets[static_cast<std::size_t>(i)];
      net.set_parameters(p.segment(i * per_net, per_net));
      outputs[static_cast<std::size_t>(i)] =
          net.forward(inputs[static_cast<std::size_t>(i)], traces[static_cast<std::size_t>(i)]);
      residual += outputs[static_cast<std::size_t>(i)];
    }
    const double loss = residual.squaredNorm() * norm;
    if (grad) {
      grad->resize(p.size());
      for (int i = 0; i < N; ++i)
        grad->segment(i * per_net, per_net) =
            nets[static_cast<std::size_t>(i)]
                .backward(traces[static_cast<std::size_t>(i)], 2.0 * norm * residual)
                .parameters;
    }
    return loss;
  };

  ModalKoopmanModel model;
  model.space_points = K;
  model.offset = offset;
  model.scale = scale;
  model.dt = field.dt();

  TrainState st;
  st.params.resize(per_net * N);
  for (int i = 0; i < N; ++i) st.params.segment(i * per_net, per_net) = nets[static_cast<std::size_t>(i)].parameters();
  st.reset(objective, 0);

  const TrainSchedule& s = options.schedule;
  const int chunk = s.freq_every > 0 ? s.freq_every : std::max(1, s.epochs);
  const int S = options.search.samples_per_period;
  Eigen::VectorXd times = Eigen::VectorXd::LinSpaced(T, 0.0, T - 1.0);
  for (int epoch = 0; epoch < s.epochs;) {
    const int count = std::min(chunk, s.epochs - epoch);
    run_epochs(st, objective, s, epoch, count, model.loss_history);
    epoch += count;
    if (s.freq_every == 0 || epoch >= s.epochs) continue;

    objective(st.params, nullptr);  // refresh per-mode outputs at the accepted parameters
    bool changed = false;
    for (int i = 0; i < N; ++i) {
      const auto& net = nets[static_cast<std::size_t>(i)];
      // Residual that mode i has to explain, T x K.
      Eigen::RowVectorXd target = y;
      for (int j = 0; j < N; ++j)
        if (j != i) target -= outputs[static_cast<std::size_t>(j)];
      const Eigen::MatrixXd R = target.reshaped(K, T);  // column t holds row t of the field

      Eigen::VectorXd lattice(static_cast<Eigen::Index>(K) * S);
      for (int p = 0; p < S; ++p)
        for (int x = 0; x < K; ++x) {
          double turns = static_cast<double>(x) / K - static_cast<double>(p) / S;
          turns -= std::floor(turns);
          lattice(p * K + x) = kTwoPi * turns;
        }
      const Eigen::MatrixXd G = net.forward(embed(lattice)).reshaped(K, S);
      Eigen::MatrixXd samples(T, S);
      for (int p = 0; p < S; ++p)
        samples.col(p) = ((R.colwise() - G.col(p)).colwise().squaredNorm() * norm).transpose();
      const FreqSearchResult search = aggregate_phase_samples(samples, times, T, options.search);

      const auto exact = [&](double w) {
        Eigen::VectorXd phases(npts);
        for (Eigen::Index q = 0; q < npts; ++q) phases(q) = mode_phase(px(q), pt(q), w, K);
        return (net.forward(embed(phases)) - target).squaredNorm() * norm;
      };
      if (auto w = coordinate_update(search, options.search, T, exact, st.loss)) {
        omegas(i) = *w;
        rebuild_input(i);
        st.reset(objective, epoch);
        changed = true;
      }
    }
    if (changed && !model.loss_history.empty()) model.loss_history.back() = st.loss;
  }

  for (int i = 0; i < N; ++i) nets[static_cast<std::size_t>(i)].set_parameters(st.params.segment(i * per_net, per_net));
  model.omegas = omegas;
  model.mode_nets = nets;
  model.variance_explained = safe_variance_explained(field.values(), decompose_modes(model, 0, T).aggregate);
  return model;
}

ModalFields decompose_modes(const ModalKoopmanModel& model, int first, int count) {
  require(model.n_modes() >= 1, "decompose_modes: model has no modes");
  require(first >= 0 && count >= 1, "decompose_modes: invalid time range");
  const int K = model.space_points;
  const Eigen::Index npts = static_cast<Eigen::Index>(K) * count;
  ModalFields out;
  out.aggregate = Eigen::MatrixXd::Zero(count, K);
  for (int i = 0; i < model.n_modes(); ++i) {
    Eigen::VectorXd phases(npts);
    for (int t = 0; t < count; ++t)
      for (int x = 0; x < K; ++x) phases(t * K + x) = mode_phase(x, first + t, model.omegas(i), K);
    const Eigen::RowVectorXd g = model.mode_nets[static_cast<std::size_t>(i)].forward(embed(phases));
    Eigen::MatrixXd mode = g.reshaped(K, count).transpose();
    mode = (mode.array() * model.scale + model.offset / model.n_modes()).matrix();
    out.aggregate += mode;
    out.modes.push_back(std::move(mode));
  }
  return out;
}

std::string modal_koopman_to_json(const ModalKoopmanModel& model) {
  nlohmann::json nets = nlohmann::json::array();
  std::vector<double> speeds;
  for (int i = 0; i < model.n_modes(); ++i) {
    nets.push_back(net_json(model.mode_nets[static_cast<std::size_t>(i)]));
    speeds.push_back(model.speed(i));
  }
  nlohmann::json j = {
      {"space_points", model.space_points},
      {"omegas", std::vector<double>(model.omegas.data(), model.omegas.data() + model.omegas.size())},
      {"speeds_px_per_step", speeds},
      {"mode_nets", nets},
      {"offset", model.offset},
      {"scale", model.scale},
      {"dt", model.dt},
      {"final_loss", model.loss_history.empty() ? nlohmann::json(nullptr) : nlohmann::json(model.loss_history.back())},
      {"variance_explained", optional_json(model.variance_explained)}};
  return j.dump(2);
}

}  // namespace rdrom
