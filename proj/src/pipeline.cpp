#include "rdrom/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "rdrom/decomposition.hpp"
#include "rdrom/field.hpp"
#include "rdrom/koopman.hpp"
#include "rdrom/linear_models.hpp"
#include "rdrom/lotka_volterra.hpp"
#include "rdrom/numfmt.hpp"
#include "rdrom/svg.hpp"
#include "rdrom/tracking.hpp"
#include "rdrom/untwist.hpp"

namespace rdrom {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& message) { fail(ErrorCode::Config, message); }

// ---------------------------------------------------------------------------
// Typed access to stage parameters

class Params {
 public:
  Params(std::string stage, json j) : stage_(std::move(stage)), j_(std::move(j)) {}

  const std::string& stage() const { return stage_; }
  const json& raw() const { return j_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) const {
    if (!j_.contains(key)) return fallback;
    return as<T>(key);
  }

  template <class T>
  std::optional<T> opt(const std::string& key) const {
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return as<T>(key);
  }

  template <class T>
  T as(const std::string& key) const {
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) bad(key, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) bad(key, "an integer");
      if constexpr (std::is_unsigned_v<T>)
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) bad(key, "a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) bad(key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) bad(key, "a string");
    }
    try {
      return v.get<T>();
    } catch (const json::exception&) {
      bad(key, "a value of the expected type");
    }
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    ok.insert("stage");
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) config_error("stage '" + stage_ + "': unknown parameter '" + k + "'");
  }

 private:
  [[noreturn]] void bad(const std::string& key, const std::string& what) const {
    config_error("stage '" + stage_ + "': parameter '" + key + "' must be " + what);
  }

  std::string stage_;
  json j_;
};

// ---------------------------------------------------------------------------
// Parsed config

struct StagePlan {
  std::string name;
  Params params;
};

struct Config {
  fs::path output;
  std::uint64_t seed = 0;
  std::optional<SynthSpec> synth;
  std::optional<fs::path> input_path;
  std::vector<StagePlan> stages;
  json normalized;
};

const std::vector<std::string> kStages = {"track", "untwist-preprocess", "untwist-refine", "pod", "rpca",
                                          "dmd",   "oscillator",         "lv",             "koopman-forecast",
                                          "koopman-modal"};

Regularizer parse_regularizer(const Params& p) {
  const std::string r = p.get<std::string>("reg", "l1");
  if (r == "l1") return Regularizer::L1;
  if (r == "l0") return Regularizer::L0;
  config_error("stage '" + p.stage() + "': reg must be \"l1\" or \"l0\"");
}

Sr3Options parse_sr3(const Params& p) {
  Sr3Options o;
  o.lambda = p.opt<double>("lambda");
  o.zeta = p.get<double>("zeta", o.zeta);
  o.regularizer = parse_regularizer(p);
  o.max_iter = p.get<int>("max_iter", o.max_iter);
  o.tol = p.get<double>("tol", o.tol);
  if (o.lambda && *o.lambda < 0.0) config_error("stage '" + p.stage() + "': lambda must be >= 0");
  if (!(o.zeta > 0.0)) config_error("stage '" + p.stage() + "': zeta must be > 0");
  return o;
}

TrackingParams parse_tracking(const Params& p, std::uint64_t seed, int default_waves) {
  TrackingParams t;
  t.min_prominence = p.get<double>("min_prominence", t.min_prominence);
  t.min_separation = p.get<int>("min_separation", t.min_separation);
  t.n_waves = p.get<int>("n_waves", default_waves);
  t.kernel_scale = p.get<double>("kernel_scale", t.kernel_scale);
  t.cluster.max_points = p.get<int>("max_points", t.cluster.max_points);
  t.cluster.seed = seed;
  if (t.n_waves < 1)
    config_error("stage '" + p.stage() + "': n_waves must be >= 1");
  return t;
}

LinkOptions parse_link(const Params& p) {
  LinkOptions l;
  l.gate = p.get<double>("gate", l.gate);
  l.history = p.get<int>("history", l.history);
  return l;
}

TermKind parse_kind(const std::string& stage, const std::string& k) {
  if (k == "constant") return TermKind::Constant;
  if (k == "linear") return TermKind::Linear;
  if (k == "polynomial") return TermKind::Polynomial;
  if (k == "sine") return TermKind::Sine;
  if (k == "exp") return TermKind::Exponential;
  config_error("stage '" + stage + "': unknown library term kind '" + k + "'");
}

LibraryRequest parse_library(const Params& p) {
  LibraryRequest req;
  req.kinds = {TermKind::Linear};
  if (!p.has("library")) return req;
  const json& lib = p.raw().at("library");
  if (!lib.is_object()) config_error("stage '" + p.stage() + "': library must be an object");
  Params lp(p.stage(), lib);
  lp.allow({"kinds", "degree", "sine_frequencies", "exp_rates"});
  req.kinds.clear();
  for (const auto& k : lp.get<std::vector<std::string>>("kinds", {"linear"})) req.kinds.push_back(parse_kind(p.stage(), k));
  req.polynomial_degree = lp.get<int>("degree", req.polynomial_degree);
  req.sine_frequencies = lp.get<std::vector<double>>("sine_frequencies", {});
  req.exp_rates = lp.get<std::vector<double>>("exp_rates", {});
  try {
    build_library(req);
  } catch (const Error& e) {
    config_error("stage '" + p.stage() + "': " + e.what());
  }
  return req;
}

TrainSchedule parse_schedule(const Params& p, TrainSchedule s) {
  s.epochs = p.get<int>("epochs", s.epochs);
  s.learning_rate = p.get<double>("learning_rate", s.learning_rate);
  s.momentum = p.get<double>("momentum", s.momentum);
  s.decay_every = p.get<int>("decay_every", s.decay_every);
  s.decay = p.get<double>("decay", s.decay);
  s.freq_every = p.get<int>("freq_every", s.freq_every);
  return s;
}

std::vector<double> parse_grid(const Params& p, const char* name) {
  if (!p.has("grids") || !p.raw().at("grids").contains(name)) return grid_range(0.01, 0.30, 0.01);
  Params g(p.stage(), p.raw().at("grids").at(name));
  if (!g.raw().is_object()) config_error("stage '" + p.stage() + "': grids." + name + " must be an object");
  g.allow({"min", "max", "step"});
  try {
    return grid_range(g.as<double>("min"), g.as<double>("max"), g.as<double>("step"));
  } catch (const json::exception&) {
    config_error("stage '" + p.stage() + "': grids." + name + " needs min, max and step");
  } catch (const Error& e) {
    config_error("stage '" + p.stage() + "': grids." + name + ": " + e.what());
  }
}

// Parameter whitelist per stage and the dry-run parse of its options.
void check_stage(const StagePlan& s, std::uint64_t seed) {
  const Params& p = s.params;
  if (s.name == "track") {
    p.allow({"min_prominence", "min_separation", "n_waves", "kernel_scale", "max_points", "window", "gate", "history"});
    parse_tracking(p, seed, 1);
    parse_link(p);
    p.get<int>("window", 10);
  } else if (s.name == "untwist-preprocess") {
    p.allow({"min_prominence", "min_separation", "n_waves", "kernel_scale", "max_points", "window", "lambda", "zeta",
             "reg", "max_iter", "tol"});
    parse_tracking(p, seed, 1);
    parse_sr3(p);
    p.get<int>("window", 10);
  } else if (s.name == "untwist-refine") {
    p.allow({"min_prominence", "min_separation", "n_waves", "kernel_scale", "max_points", "seed_window", "gate",
             "history", "library", "wave", "lambda", "zeta", "reg", "max_iter", "tol"});
    parse_tracking(p, seed, 1);
    parse_link(p);
    parse_sr3(p);
    parse_library(p);
    p.get<int>("wave", 0);
    p.get<int>("seed_window", 10);
  } else if (s.name == "pod") {
    p.allow({"source", "rank"});
    p.opt<int>("rank");
  } else if (s.name == "rpca") {
    p.allow({"source", "lambda", "mu", "tol", "max_iter"});
    p.opt<double>("lambda");
    p.opt<double>("mu");
    p.get<double>("tol", 1e-9);
    p.get<int>("max_iter", 1000);
  } else if (s.name == "dmd") {
    p.allow({"source", "rank"});
    p.opt<int>("rank");
  } else if (s.name == "oscillator") {
    p.allow({"waves"});
    p.get<std::vector<int>>("waves", {0, 1});
  } else if (s.name == "lv") {
    p.allow({"waves", "negate", "train_len", "grids"});
    p.get<std::vector<int>>("waves", {0, 1});
    p.get<std::vector<bool>>("negate", {true, false});
    p.get<int>("train_len", 500);
    for (const char* g : {"alpha", "beta", "delta", "gamma"}) parse_grid(p, g);
  } else if (s.name == "koopman-forecast") {
    p.allow({"source", "n_freq", "hidden", "epochs", "learning_rate", "momentum", "decay_every", "decay",
             "freq_every", "train_fraction", "seed", "first_row", "rows", "stride_x"});
    parse_schedule(p, {});
    p.get<int>("n_freq", 1);
    p.get<std::vector<int>>("hidden", {32, 32});
    p.get<double>("train_fraction", 6.0 / 7.0);
    p.get<std::uint64_t>("seed", seed);
  } else if (s.name == "koopman-modal") {
    p.allow({"source", "n_modes", "hidden", "epochs", "learning_rate", "momentum", "decay_every", "decay",
             "freq_every", "seed", "first_row", "rows", "stride_x"});
    parse_schedule(p, ModalKoopmanOptions{}.schedule);
    p.get<int>("n_modes", 1);
    p.get<std::vector<int>>("hidden", {32, 32});
    p.get<std::uint64_t>("seed", seed);
  }
  if (p.has("source")) {
    const auto src = p.as<std::string>("source");
    if (src != "input" && src != "preprocessed" && src != "refined" && src != "latest")
      config_error("stage '" + s.name + "': source must be input, preprocessed, refined or latest");
  }
}

Config parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    config_error(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) config_error("config must be a JSON object");
  Params top("config", j);
  for (const auto& [k, v] : j.items())
    if (k != "output" && k != "seed" && k != "input" && k != "stages")
      config_error("config: unknown field '" + k + "'");

  Config c;
  if (!j.contains("output") || !j.at("output").is_string() || j.at("output").get<std::string>().empty())
    config_error("config: 'output' must be a non-empty directory path");
  c.output = j.at("output").get<std::string>();
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) config_error("config: 'seed' must be a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }

  if (!j.contains("input") || !j.at("input").is_object()) config_error("config: 'input' must be an object");
  const json& in = j.at("input");
  if (in.contains("synth") == in.contains("path") || in.size() != 1)
    config_error("config: 'input' needs exactly one of 'synth' or 'path'");
  if (in.contains("synth")) {
    json spec = in.at("synth");
    if (!spec.is_object()) config_error("config: input.synth must be an object");
    if (!spec.contains("seed")) spec["seed"] = c.seed;
    try {
      c.synth = synth_spec_from_json(spec.dump());
      c.synth->validate();
    } catch (const Error& e) {
      config_error(std::string("config: input.synth: ") + e.what());
    }
  } else {
    if (!in.at("path").is_string()) config_error("config: input.path must be a string");
    c.input_path = in.at("path").get<std::string>();
    if (!fs::is_regular_file(*c.input_path))
      config_error("config: input file '" + c.input_path->string() + "' does not exist");
  }

  if (!j.contains("stages")) j["stages"] = json::array();
  if (!j.at("stages").is_array()) config_error("config: 'stages' must be an array");
  std::set<std::string> done;
  for (const auto& entry : j.at("stages")) {
    std::string name;
    json params = json::object();
    if (entry.is_string()) {
      name = entry.get<std::string>();
    } else if (entry.is_object() && entry.contains("stage") && entry.at("stage").is_string()) {
      name = entry.at("stage").get<std::string>();
      params = entry;
    } else {
      config_error("config: each stage must be a name or an object with a 'stage' field");
    }
    if (std::find(kStages.begin(), kStages.end(), name) == kStages.end())
      config_error("config: unknown stage '" + name + "'");
    StagePlan plan{name, Params(name, params)};
    check_stage(plan, c.seed);

    auto need = [&](const std::string& dep, const std::string& why) {
      if (!done.count(dep)) config_error("stage '" + name + "' " + why + " but no earlier '" + dep + "' stage produces it");
    };
    if (name == "untwist-refine") need("untwist-preprocess", "refines the preprocessed field");
    if (name == "oscillator" || name == "lv")
      if (!done.count("track") && !done.count("untwist-refine"))
        config_error("stage '" + name + "' needs wave tracks but no earlier 'track' or 'untwist-refine' stage produces them");
    if (plan.params.has("source")) {
      const auto src = plan.params.as<std::string>("source");
      if (src == "preprocessed") need("untwist-preprocess", "reads the preprocessed field");
      if (src == "refined") need("untwist-refine", "reads the refined field");
    }
    done.insert(name);
    c.stages.push_back(std::move(plan));
  }
  j["seed"] = c.seed;
  c.normalized = j;
  return c;
}

// ---------------------------------------------------------------------------
// Run context and artifact helpers

struct Context {
  Config config;
  std::optional<Field> input, preprocessed, refined;
  std::optional<PreprocessResult> preprocess;
  std::vector<WaveTrack> tracks;
  std::vector<ArtifactRecord> artifacts;
  std::string stage_dir;
  std::string stage_name;

  const Field& source(const Params& p) const {
    const std::string src = p.get<std::string>("source", "latest");
    if (src == "input") return *input;
    if (src == "preprocessed") return *preprocessed;
    if (src == "refined") return *refined;
    if (refined) return *refined;
    if (preprocessed) return *preprocessed;
    return *input;
  }

  fs::path path(const std::string& name) {
    const fs::path dir = config.output / stage_dir;
    fs::create_directories(dir);
    return dir / name;
  }

  void record(const std::string& name, const std::string& kind) {
    artifacts.push_back({stage_name, (fs::path(stage_dir) / name).generic_string(), kind});
  }

  void text(const std::string& name, const std::string& kind, const std::string& content) {
    const fs::path p = path(name);
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    if (!os) fail(ErrorCode::Io, "cannot write " + p.string());
    os << content;
    if (!os) fail(ErrorCode::Io, "failed writing " + p.string());
    record(name, kind);
  }

  void field(const std::string& name, const Field& f, const std::string& title) {
    save_field(f, path(name + ".csv"));
    record(name + ".csv", "field-csv");
    text(name + ".svg", "heatmap-svg", svg_heatmap(f.values(), title, "x (px)", "t (row)"));
  }

  void matrix_csv(const std::string& name, const std::vector<std::string>& header, const Eigen::MatrixXd& m) {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? "," : "") << format_double(m(r, c));
      os << '\n';
    }
    text(name, "table-csv", os.str());
  }

  void tracks_out(const std::string& name, const std::vector<WaveTrack>& t, const std::string& title) {
    save_tracks(t, path(name + ".csv"));
    record(name + ".csv", "tracks-csv");
    std::vector<PlotSeries> series;
    for (const auto& tr : t) {
      PlotSeries s{"wave " + std::to_string(tr.label), {}, {}, true};
      for (const auto& p : tr.points) {
        s.x.push_back(p.x_index);
        s.y.push_back(p.t_index);
      }
      series.push_back(std::move(s));
    }
    text(name + ".svg", "plot-svg", svg_plot(series, title, "x (px)", "t (row)"));
  }
};

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Field crop(const Field& f, const Params& p) {
  const int first = p.get<int>("first_row", 0);
  const int rows = p.get<int>("rows", static_cast<int>(f.time_steps()) - first);
  const int stride = p.get<int>("stride_x", 1);
  require(first >= 0 && rows >= 2 && first + rows <= f.time_steps(), "row range outside the field");
  require(stride >= 1 && f.space_points() / stride >= 2, "stride_x must leave at least 2 columns");
  const Eigen::Index cols = f.space_points() / stride;
  Eigen::MatrixXd v(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) v.col(c) = f.values().block(first, c * stride, rows, 1);
  return Field(std::move(v), f.dt());
}

const WaveTrack& track_at(const Context& ctx, int index, const std::string& stage) {
  if (index < 0 || index >= static_cast<int>(ctx.tracks.size()))
    fail(ErrorCode::InvalidArgument, stage + ": wave " + std::to_string(index) + " does not exist (" +
                                         std::to_string(ctx.tracks.size()) + " tracks)");
  return ctx.tracks[static_cast<std::size_t>(index)];
}

// ---------------------------------------------------------------------------
// Stages

std::vector<PeakPoint> head_points(const Field& f, const TrackingParams& tp, int window) {
  std::vector<PeakPoint> head;
  for (const auto& pt : detect_ridges(f.rows(0, std::min<Eigen::Index>(window, f.time_steps())), tp.min_prominence,
                                      tp.min_separation))
    head.push_back(pt);
  if (head.empty()) fail(ErrorCode::Numerical, "no peaks detected in the first " + std::to_string(window) + " rows");
  return head;
}

int suggested_waves(const std::vector<PeakPoint>& head, const Field& f, const TrackingParams& tp) {
  return suggest_wave_count(head, tp.kernel_scale, f.domain_length(), std::min<int>(8, static_cast<int>(head.size())),
                            tp.cluster);
}

void run_track(Context& ctx, const Params& p) {
  const Field& f = *ctx.input;
  const TrackingParams tp = parse_tracking(p, ctx.config.seed, 1);
  const auto head = head_points(f, tp, p.get<int>("window", 10));
  const int suggested = suggested_waves(head, f, tp);
  const auto points = detect_ridges(f, tp.min_prominence, tp.min_separation);
  const auto seeds = cluster_waves(head, tp.n_waves, tp.kernel_scale, f.domain_length(), tp.cluster);
  ctx.tracks = link_tracks(points, seeds, f.domain_length(), parse_link(p));
  ctx.tracks_out("tracks", ctx.tracks, "Wave tracks");
  json summary = {{"n_waves", tp.n_waves}, {"suggested_n_waves", suggested}, {"points", points.size()}};
  json lengths = json::array();
  for (const auto& t : ctx.tracks) lengths.push_back(t.points.size());
  summary["track_lengths"] = lengths;
  ctx.text("tracks.json", "report-json", summary.dump(2));
}

void run_preprocess(Context& ctx, const Params& p) {
  PreprocessOptions o;
  o.window = p.get<int>("window", o.window);
  o.tracking = parse_tracking(p, ctx.config.seed, 1);
  o.sr3 = parse_sr3(p);
  PreprocessResult r = preprocess_shift(*ctx.input, o);
  ctx.field("shifted", r.shifted, "Preprocessed (mean-speed) frame");
  json model = json::parse(speed_model_to_json(r.model, linear_library()));
  model["mean_speed"] = r.mean_speed;
  ctx.text("speed_model.json", "model-json", model.dump(2));
  ctx.tracks_out("tracks", r.tracks, "Preprocessing tracks");
  Eigen::MatrixXd off(static_cast<Eigen::Index>(r.shift.offsets.size()), 2);
  for (std::size_t i = 0; i < r.shift.offsets.size(); ++i) off.row(static_cast<Eigen::Index>(i)) << static_cast<double>(i), r.shift.offsets[i];
  ctx.matrix_csv("offsets.csv", {"t_index", "offset"}, off);
  ctx.preprocessed = r.shifted;
  ctx.preprocess = std::move(r);
}

void run_refine(Context& ctx, const Params& p) {
  RefineOptions o;
  o.seed_window = p.get<int>("seed_window", o.seed_window);
  o.tracking = parse_tracking(p, ctx.config.seed, ctx.preprocess->tracks.size());
  o.link = parse_link(p);
  o.sr3 = parse_sr3(p);
  const FunctionLibrary library = build_library(parse_library(p));
  const int wave = p.get<int>("wave", 0);
  RefineResult r = refine_shift(*ctx.preprocessed, library, wave, o);
  ctx.field("shifted", r.shifted, "Co-moving frame of wave " + std::to_string(wave));
  json model = json::parse(speed_model_to_json(r.model, library));
  model["wave"] = wave;
  ctx.text("speed_model.json", "model-json", model.dump(2));
  ctx.tracks_out("tracks", r.tracks, "Tracks in the preprocessed frame");
  Eigen::MatrixXd off(static_cast<Eigen::Index>(r.shift.offsets.size()), 3);
  for (std::size_t i = 0; i < r.shift.offsets.size(); ++i) {
    const double pre = ctx.preprocess->shift.offsets[i];
    off.row(static_cast<Eigen::Index>(i)) << static_cast<double>(i), r.shift.offsets[i], pre + r.shift.offsets[i];
  }
  ctx.matrix_csv("offsets.csv", {"t_index", "refine_offset", "total_offset"}, off);
  ctx.refined = r.shifted;
  ctx.tracks = std::move(r.tracks);
}

void run_pod(Context& ctx, const Params& p) {
  const Field& f = ctx.source(p);
  const auto rank = p.opt<int>("rank");
  const ModalDecomposition d = pod(f, rank ? std::optional<Eigen::Index>(*rank) : std::nullopt);
  save_modes(d, ctx.path("modes.csv"));
  ctx.record("modes.csv", "modes-csv");
  Eigen::MatrixXd sv(d.rank(), 2);
  for (Eigen::Index i = 0; i < d.rank(); ++i) sv.row(i) << static_cast<double>(i), d.singular_values(i);
  ctx.matrix_csv("singular_values.csv", {"index", "singular_value"}, sv);
  json report = {{"rank", d.rank()}, {"total_energy", d.total_energy}, {"first_mode_energy", d.first_mode_energy()}};
  ctx.text("pod.json", "report-json", report.dump(2));
  std::vector<double> xs(static_cast<std::size_t>(d.modes.rows()));
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = static_cast<double>(i);
  ctx.text("first_mode.svg", "plot-svg",
           svg_plot({{"mode 1", xs, to_std(d.modes.col(0)), false}}, "First POD mode", "x (px)", "amplitude"));
}

void run_rpca(Context& ctx, const Params& p) {
  const Field& f = ctx.source(p);
  RpcaOptions o;
  o.lambda = p.opt<double>("lambda");
  o.mu = p.opt<double>("mu");
  o.tol = p.get<double>("tol", o.tol);
  o.max_iter = p.get<int>("max_iter", o.max_iter);
  const RpcaResult r = rpca(snapshot_matrix(f), o);
  ctx.field("low_rank", Field(r.low_rank.transpose(), f.dt()), "RPCA low-rank part");
  ctx.field("sparse", Field(r.sparse.transpose(), f.dt()), "RPCA sparse part");
  json report = {{"iterations", r.iterations}, {"converged", r.converged}};
  if (r.low_rank.norm() > 0.0) {
    const ModalDecomposition d = pod(r.low_rank, 1);
    Eigen::MatrixXd mode(d.modes.rows(), 2);
    for (Eigen::Index i = 0; i < mode.rows(); ++i) mode.row(i) << static_cast<double>(i), d.modes(i, 0);
    ctx.matrix_csv("first_mode.csv", {"x", "mode"}, mode);
    report["first_mode_energy"] = d.first_mode_energy();
    ctx.text("first_mode.svg", "plot-svg",
             svg_plot({{"mode 1", to_std(mode.col(0)), to_std(mode.col(1)), false}}, "First mode of the low-rank part",
                      "x (px)", "amplitude"));
  }
  ctx.text("rpca.json", "report-json", report.dump(2));
}

void run_dmd(Context& ctx, const Params& p) {
  const Field& f = ctx.source(p);
  const auto rank = p.opt<int>("rank");
  const DmdModel m = exact_dmd(f, rank ? std::optional<Eigen::Index>(*rank) : std::nullopt);
  ctx.text("dmd.json", "model-json", dmd_model_to_json(m));
  const Eigen::MatrixXd rec = dmd_forecast(m, static_cast<int>(f.time_steps()) - 1).transpose();
  ctx.field("reconstruction", Field(rec, f.dt()), "DMD reconstruction");
  json report = {{"rank", m.rank()}};
  try {
    report["variance_explained"] = variance_explained(f.values(), rec);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::UndefinedMetric) throw;
    report["variance_explained"] = nullptr;
  }
  ctx.text("dmd_report.json", "report-json", report.dump(2));
  PlotSeries eig{"eigenvalues", {}, {}, true}, circle{"unit circle", {}, {}, false};
  for (const auto& l : m.eigenvalues) {
    eig.x.push_back(l.real());
    eig.y.push_back(l.imag());
  }
  for (int i = 0; i <= 128; ++i) {
    circle.x.push_back(std::cos(2.0 * std::numbers::pi * i / 128));
    circle.y.push_back(std::sin(2.0 * std::numbers::pi * i / 128));
  }
  ctx.text("eigenvalues.svg", "plot-svg", svg_plot({circle, eig}, "DMD eigenvalues", "Re", "Im"));
}

void run_oscillator(Context& ctx, const Params& p) {
  const auto waves = p.get<std::vector<int>>("waves", {0, 1});
  if (waves.size() != 2) fail(ErrorCode::InvalidArgument, "oscillator: 'waves' must list two track labels");
  const SeparationSeries sep =
      wave_separation(track_at(ctx, waves[0], "oscillator"), track_at(ctx, waves[1], "oscillator"));
  const double dt = ctx.input->dt();
  const OscillatorFit fit = fit_oscillator(sep.values, dt);
  const Eigen::VectorXd vel = finite_difference(sep.values, dt);
  Eigen::MatrixXd table(sep.values.size(), 4);
  for (Eigen::Index i = 0; i < table.rows(); ++i)
    table.row(i) << static_cast<double>(sep.first_t + i), sep.values(i), vel(i), fit(static_cast<double>(i) * dt);
  ctx.matrix_csv("separation.csv", {"t_index", "x1", "x2", "fit"}, table);
  json report = json::parse(oscillator_fit_to_json(fit));
  report["normalization"] = {{"kind", "de-meaned unwrapped separation"}, {"removed_mean", sep.mean},
                             {"first_t_index", sep.first_t}, {"waves", waves}};
  ctx.text("oscillator.json", "report-json", report.dump(2));
  ctx.text("separation.svg", "plot-svg",
           svg_plot({{"x1 (data)", to_std(table.col(0)), to_std(table.col(1)), false},
                     {"damped oscillator fit", to_std(table.col(0)), to_std(table.col(3)), false}},
                    "Wave separation", "t (row)", "x1 (px)"));
}

void run_lv(Context& ctx, const Params& p) {
  const auto waves = p.get<std::vector<int>>("waves", {0, 1});
  const auto negate = p.get<std::vector<bool>>("negate", {true, false});
  if (waves.size() != 2 || negate.size() != 2)
    fail(ErrorCode::InvalidArgument, "lv: 'waves' and 'negate' must have two entries");
  const WaveTrack& a = track_at(ctx, waves[0], "lv");
  const WaveTrack& b = track_at(ctx, waves[1], "lv");
  const int first = std::max(a.points.front().t_index, b.points.front().t_index);
  const int last = std::min(a.points.back().t_index, b.points.back().t_index);
  if (last - first + 1 < 2) fail(ErrorCode::InvalidArgument, "lv: tracks overlap in fewer than 2 time steps");

  // Affine map of each (optionally negated) position series onto [0.5, 1.5].
  json transform = json::array();
  auto positive = [&](const WaveTrack& t, bool neg) {
    Eigen::VectorXd s = sample_track(t, first, last);
    if (neg) s = -s;
    const double lo = s.minCoeff(), hi = s.maxCoeff();
    const double scale = hi > lo ? 1.0 / (hi - lo) : 1.0;
    transform.push_back({{"negated", neg}, {"offset", -lo}, {"scale", scale}, {"shift", 0.5}});
    return std::vector<double>(to_std(((s.array() - lo) * scale + 0.5).matrix()));
  };
  const std::vector<double> y = positive(a, negate[0]);
  const std::vector<double> z = positive(b, negate[1]);
  const int train_len = std::min<int>(p.get<int>("train_len", 500), static_cast<int>(y.size()));
  LvGrids grids;
  grids.alpha = parse_grid(p, "alpha");
  grids.beta = parse_grid(p, "beta");
  grids.delta = parse_grid(p, "delta");
  grids.gamma = parse_grid(p, "gamma");
  const double dt = ctx.input->dt();
  const LvFit fit = lv_fit_sweep(y, z, train_len, dt, grids);
  const LvTrajectory traj = lv_simulate(fit.params, y[0], z[0], static_cast<int>(y.size()) - 1, dt);

  Eigen::MatrixXd table(static_cast<Eigen::Index>(y.size()), 5);
  for (std::size_t i = 0; i < y.size(); ++i)
    table.row(static_cast<Eigen::Index>(i)) << static_cast<double>(first) + static_cast<double>(i), y[i], z[i], traj.y[i], traj.z[i];
  ctx.matrix_csv("lv_prediction.csv", {"t_index", "y", "z", "y_fit", "z_fit"}, table);
  json report = json::parse(lv_fit_to_json(fit));
  report["train_len"] = train_len;
  report["series_length"] = y.size();
  report["first_t_index"] = first;
  report["waves"] = waves;
  report["preprocessing"] = {{"kind", "affine map to [0.5, 1.5] after optional negation"}, {"series", transform}};
  ctx.text("lv.json", "report-json", report.dump(2));
  const std::vector<double> ts = to_std(table.col(0));
  ctx.text("lv.svg", "plot-svg",
           svg_plot({{"y (data)", ts, y, false},
                     {"z (data)", ts, z, false},
                     {"y (Lotka-Volterra)", ts, traj.y, false},
                     {"z (Lotka-Volterra)", ts, traj.z, false}},
                    "Lotka-Volterra fit (train " + std::to_string(train_len) + " steps)", "t (row)", "population"));
}

void training_curve(Context& ctx, const std::vector<double>& loss) {
  Eigen::MatrixXd curve(static_cast<Eigen::Index>(loss.size()), 2);
  for (std::size_t i = 0; i < loss.size(); ++i) curve.row(static_cast<Eigen::Index>(i)) << static_cast<double>(i), loss[i];
  ctx.matrix_csv("training_curve.csv", {"epoch", "loss"}, curve);
  if (!loss.empty())
    ctx.text("training_curve.svg", "plot-svg",
             svg_plot({{"loss", to_std(curve.col(0)), loss, false}}, "Training loss", "epoch", "mean squared error"));
}

void run_koopman_forecast(Context& ctx, const Params& p) {
  const Field f = crop(ctx.source(p), p);
  KoopmanForecastOptions o;
  o.n_freq = p.get<int>("n_freq", o.n_freq);
  o.hidden = p.get<std::vector<int>>("hidden", o.hidden);
  o.schedule = parse_schedule(p, o.schedule);
  o.train_fraction = p.get<double>("train_fraction", o.train_fraction);
  o.seed = p.get<std::uint64_t>("seed", ctx.config.seed);
  const KoopmanForecastModel m = fit_koopman_forecast(f, o);
  ctx.text("model.json", "model-json", koopman_forecast_to_json(m));
  ctx.field("forecast", Field(forecast(m, 0, static_cast<int>(f.time_steps())), f.dt()), "Koopman forecast");
  training_curve(ctx, m.loss_history);
}

void run_koopman_modal(Context& ctx, const Params& p) {
  const Field f = crop(ctx.source(p), p);
  ModalKoopmanOptions o;
  o.n_modes = p.get<int>("n_modes", o.n_modes);
  o.hidden = p.get<std::vector<int>>("hidden", o.hidden);
  o.schedule = parse_schedule(p, o.schedule);
  o.seed = p.get<std::uint64_t>("seed", ctx.config.seed);
  const ModalKoopmanModel m = fit_modal_koopman(f, o);
  ctx.text("model.json", "model-json", modal_koopman_to_json(m));
  const ModalFields d = decompose_modes(m, 0, static_cast<int>(f.time_steps()));
  ctx.field("aggregate", Field(d.aggregate, f.dt()), "Modal Koopman prediction");
  for (std::size_t i = 0; i < d.modes.size(); ++i)
    ctx.field("mode_" + std::to_string(i), Field(d.modes[i], f.dt()),
              "Mode " + std::to_string(i) + " (" + format_double(m.speed(static_cast<int>(i))) + " px/step)");
  training_curve(ctx, m.loss_history);
}

const std::map<std::string, std::function<void(Context&, const Params&)>>& runners() {
  static const std::map<std::string, std::function<void(Context&, const Params&)>> r = {
      {"track", run_track},
      {"untwist-preprocess", run_preprocess},
      {"untwist-refine", run_refine},
      {"pod", run_pod},
      {"rpca", run_rpca},
      {"dmd", run_dmd},
      {"oscillator", run_oscillator},
      {"lv", run_lv},
      {"koopman-forecast", run_koopman_forecast},
      {"koopman-modal", run_koopman_modal}};
  return r;
}

}  // namespace

const std::vector<std::string>& pipeline_stage_names() { return kStages; }

void validate_pipeline_config(const std::string& config_json) { parse_config(config_json); }

PipelineReport run_pipeline(const std::string& config_json) {
  Context ctx;
  ctx.config = parse_config(config_json);
  const fs::path& out = ctx.config.output;
  try {
    fs::create_directories(out);
  } catch (const fs::filesystem_error& e) {
    fail(ErrorCode::Io, "cannot create output directory " + out.string() + ": " + e.what());
  }
  fs::remove(out / "FAILED");

  PipelineReport report;
  json stages = json::array();

  auto run_stage = [&](int index, const std::string& name, const std::function<void()>& body) {
    ctx.stage_dir = (index < 10 ? "0" : "") + std::to_string(index) + "_" + name;
    ctx.stage_name = name;
    const std::size_t before = ctx.artifacts.size();
    json entry = {{"index", index}, {"stage", name}};
    try {
      body();
      entry["status"] = "ok";
    } catch (const Error& e) {
      report.ok = false;
      report.failed_stage = name;
      report.error_code = e.code();
      report.error_message = e.what();
    } catch (const std::exception& e) {
      report.ok = false;
      report.failed_stage = name;
      report.error_code = ErrorCode::StageFailure;
      report.error_message = e.what();
    }
    if (!report.ok) entry["status"] = "failed";
    json files = json::array();
    for (std::size_t i = before; i < ctx.artifacts.size(); ++i)
      files.push_back({{"path", ctx.artifacts[i].path}, {"kind", ctx.artifacts[i].kind}});
    entry["artifacts"] = files;
    stages.push_back(entry);
    return report.ok;
  };

  bool ok = run_stage(0, "input", [&] {
    ctx.text("config.json", "config-json", ctx.config.normalized.dump(2));
    if (ctx.config.synth) {
      SynthResult s = synth_field(*ctx.config.synth);
      ctx.text("synth_spec.json", "synth-json", synth_spec_to_json(*ctx.config.synth));
      if (!s.truth.empty()) {
        save_tracks(s.truth, ctx.path("truth_tracks.csv"));
        ctx.record("truth_tracks.csv", "tracks-csv");
      }
      ctx.input = std::move(s.field);
    } else {
      ctx.input = load_field(*ctx.config.input_path);
    }
    ctx.field("field", *ctx.input, "Input field (lab frame)");
  });
  for (std::size_t i = 0; ok && i < ctx.config.stages.size(); ++i) {
    const StagePlan& plan = ctx.config.stages[i];
    ok = run_stage(static_cast<int>(i) + 1, plan.name, [&] { runners().at(plan.name)(ctx, plan.params); });
  }

  json manifest = {{"status", report.ok ? "ok" : "failed"}, {"seed", ctx.config.seed}, {"stages", stages}, {"failure", nullptr}};
  if (!report.ok) {
    manifest["failure"] = {{"stage", report.failed_stage},
                           {"code", error_code_name(report.error_code)},
                           {"message", report.error_message}};
    std::ofstream marker(out / "FAILED", std::ios::binary | std::ios::trunc);
    marker << "stage: " << report.failed_stage << "\ncause: " << report.error_message << '\n';
  }
  report.artifacts = ctx.artifacts;
  report.manifest_json = manifest.dump(2);
  std::ofstream mf(out / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!mf) fail(ErrorCode::Io, "cannot write " + (out / "manifest.json").string());
  mf << report.manifest_json << '\n';
  return report;
}

}  // namespace rdrom
