#include "rdrom/field.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "rdrom/error.hpp"
#include "rdrom/numfmt.hpp"

namespace rdrom {

namespace {

double wrap_position(double x, double length) {
  double r = std::fmod(x, length);
  if (r < 0.0) r += length;
  if (r >= length) r = 0.0;
  return r;
}

}  // namespace

Field::Field(Eigen::MatrixXd values, double dt) : values_(std::move(values)), dt_(dt) {
  require(values_.rows() >= 2, "field needs at least 2 time steps");
  require(values_.cols() >= 2, "field needs at least 2 spatial points");
  require(std::isfinite(dt_) && dt_ > 0.0, "field dt must be positive and finite");
  require(values_.allFinite(), "field values must be finite");
}

Field Field::rows(Eigen::Index first, Eigen::Index count) const {
  require(first >= 0 && count >= 2 && first + count <= time_steps(), "row range out of bounds");
  return Field(values_.middleRows(first, count), dt_);
}

// ---------------------------------------------------------------------------

std::string format_field_csv(const Field& field) {
  std::string out;
  out.reserve(static_cast<std::size_t>(field.values().size()) * 12 + 64);
  out += "# K=" + std::to_string(field.space_points()) + " T=" +
         std::to_string(field.time_steps()) + " dt=" + format_double(field.dt()) + "\n";
  const auto& v = field.values();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      if (c) out += ',';
      out += format_double(v(r, c));
    }
    out += '\n';
  }
  return out;
}

Field parse_field_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty() || line[0] != '#')
    fail(ErrorCode::Parse, "missing '# K=<int> T=<int> dt=<float>' header on line 1");

  long declared_k = -1, declared_t = -1;
  std::optional<double> dt;
  std::istringstream header(line.substr(1));
  std::string token;
  while (header >> token) {
    auto eq = token.find('=');
    if (eq == std::string::npos) continue;
    std::string key = token.substr(0, eq);
    std::string value = token.substr(eq + 1);
    if (key == "K" || key == "T") {
      auto parsed = parse_double(value);
      if (!parsed || *parsed != std::floor(*parsed) || *parsed < 0)
        fail(ErrorCode::Parse, "header field " + key + " is not a non-negative integer: " + value);
      (key == "K" ? declared_k : declared_t) = static_cast<long>(*parsed);
    } else if (key == "dt") {
      dt = parse_double(value);
      if (!dt) fail(ErrorCode::Parse, "header field dt is not numeric: " + value);
    }
  }
  if (!dt) fail(ErrorCode::Parse, "header is missing dt=<float>");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t start = 0;
    std::size_t column = 0;
    while (true) {
      auto comma = line.find(',', start);
      auto cell = std::string_view(line).substr(start, comma == std::string::npos ? std::string::npos
                                                                                   : comma - start);
      auto value = parse_double(cell);
      if (!value)
        fail(ErrorCode::Parse, "non-numeric cell at row " + std::to_string(rows.size()) +
                                   ", column " + std::to_string(column) + " (line " +
                                   std::to_string(line_no) + "): '" + std::string(cell) + "'");
      row.push_back(*value);
      ++column;
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      fail(ErrorCode::Parse, "ragged row " + std::to_string(rows.size()) + " (line " +
                                 std::to_string(line_no) + "): expected " +
                                 std::to_string(rows.front().size()) + " columns, found " +
                                 std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(ErrorCode::Parse, "field CSV has no data rows");
  const auto n_rows = static_cast<long>(rows.size());
  const auto n_cols = static_cast<long>(rows.front().size());
  if (declared_k >= 0 && declared_k != n_cols)
    fail(ErrorCode::Parse, "header K=" + std::to_string(declared_k) + " but rows have " +
                               std::to_string(n_cols) + " columns");
  if (declared_t >= 0 && declared_t != n_rows)
    fail(ErrorCode::Parse, "header T=" + std::to_string(declared_t) + " but file has " +
                               std::to_string(n_rows) + " rows");

  Eigen::MatrixXd values(n_rows, n_cols);
  for (long r = 0; r < n_rows; ++r)
    for (long c = 0; c < n_cols; ++c) values(r, c) = rows[r][c];
  try {
    return Field(std::move(values), *dt);
  } catch (const Error& e) {
    fail(ErrorCode::Parse, std::string("invalid field: ") + e.what());
  }
}

Field load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open field file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_field_csv(buffer.str());
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

void save_field(const Field& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << format_field_csv(field);
  if (!out) fail(ErrorCode::Io, "failed writing " + path.string());
}

// ---------------------------------------------------------------------------

double PulseSpec::center(double t) const {
  double x = x0;
  for (const auto& term : speed) {
    switch (term.kind) {
      case SpeedTerm::Kind::Constant:
        x += term.value * t;
        break;
      case SpeedTerm::Kind::Linear:
        x += 0.5 * term.value * t * t;
        break;
      case SpeedTerm::Kind::Sine:
        if (term.frequency == 0.0)
          x += term.value * std::sin(term.phase) * t;
        else
          x += term.value / term.frequency *
               (std::cos(term.phase) - std::cos(term.frequency * t + term.phase));
        break;
      case SpeedTerm::Kind::Exponential:
        if (term.rate == 0.0)
          x += term.value * t;
        else
          x += term.value / term.rate * std::expm1(term.rate * t);
        break;
    }
  }
  return x;
}

double pulse_value(const PulseSpec& pulse, double x, double center, double domain_length) {
  const double c = wrap_position(center, domain_length);
  if (pulse.shape == PulseShape::Gaussian) {
    double sum = 0.0;
    const double inv = 1.0 / (2.0 * pulse.width * pulse.width);
    for (int image = -1; image <= 1; ++image) {
      const double d = x - c - image * domain_length;
      sum += std::exp(-d * d * inv);
    }
    return pulse.amplitude * sum;
  }
  // Sawtooth: vertical front at the center, linear decay over `width` behind it.
  double d = std::fmod(x - c, domain_length);
  if (d >= 0.5 * domain_length) d -= domain_length;
  if (d < -0.5 * domain_length) d += domain_length;
  if (d > 0.0 || d < -pulse.width) return 0.0;
  return pulse.amplitude * (1.0 + d / pulse.width);
}

void SynthSpec::validate() const {
  require(space_points >= 2, "synth: K must be >= 2");
  require(time_steps >= 2, "synth: T must be >= 2");
  require(std::isfinite(dt) && dt > 0.0, "synth: dt must be positive");
  require(std::isfinite(noise_sigma) && noise_sigma >= 0.0, "synth: noise_sigma must be >= 0");
  for (std::size_t i = 0; i < pulses.size(); ++i) {
    const auto& p = pulses[i];
    require(std::isfinite(p.width) && p.width > 0.0,
            "synth: pulse " + std::to_string(i) + " width must be > 0");
    require(std::isfinite(p.amplitude) && p.amplitude > 0.0,
            "synth: pulse " + std::to_string(i) + " amplitude must be > 0");
    require(std::isfinite(p.x0), "synth: pulse " + std::to_string(i) + " x0 must be finite");
  }
}

namespace {

void add_pulse(Eigen::MatrixXd& values, const PulseSpec& pulse, double dt) {
  const double length = static_cast<double>(values.cols());
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    const double center = pulse.center(static_cast<double>(r) * dt);
    for (Eigen::Index c = 0; c < values.cols(); ++c)
      values(r, c) += pulse_value(pulse, static_cast<double>(c), center, length);
  }
}

}  // namespace

SynthResult synth_field(const SynthSpec& spec) {
  spec.validate();
  const double length = static_cast<double>(spec.space_points);
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(spec.time_steps, spec.space_points);
  std::vector<WaveTrack> truth;
  for (std::size_t i = 0; i < spec.pulses.size(); ++i) {
    const auto& pulse = spec.pulses[i];
    add_pulse(values, pulse, spec.dt);
    WaveTrack track;
    track.label = static_cast<int>(i);
    for (int r = 0; r < spec.time_steps; ++r) {
      const double center = pulse.center(r * spec.dt);
      track.points.push_back({r, wrap_position(center, length), pulse.amplitude});
      track.unwrapped_x.push_back(center);
    }
    truth.push_back(std::move(track));
  }
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      for (Eigen::Index c = 0; c < values.cols(); ++c) values(r, c) += noise(rng);
  }
  return {Field(std::move(values), spec.dt), std::move(truth)};
}

Field synth_component(const SynthSpec& spec, std::size_t index) {
  spec.validate();
  require(index < spec.pulses.size(), "synth: pulse index out of range");
  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(spec.time_steps, spec.space_points);
  add_pulse(values, spec.pulses[index], spec.dt);
  return Field(std::move(values), spec.dt);
}

// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

SpeedTerm speed_term_from_json(const json& j) {
  SpeedTerm term;
  const std::string kind = j.value("kind", "constant");
  if (kind == "constant") {
    term.kind = SpeedTerm::Kind::Constant;
    term.value = j.at("value").get<double>();
  } else if (kind == "linear") {
    term.kind = SpeedTerm::Kind::Linear;
    term.value = j.at("slope").get<double>();
  } else if (kind == "sine") {
    term.kind = SpeedTerm::Kind::Sine;
    term.value = j.at("amplitude").get<double>();
    term.frequency = j.at("frequency").get<double>();
    term.phase = j.value("phase", 0.0);
  } else if (kind == "exp") {
    term.kind = SpeedTerm::Kind::Exponential;
    term.value = j.at("amplitude").get<double>();
    term.rate = j.at("rate").get<double>();
  } else {
    fail(ErrorCode::Parse, "unknown speed term kind '" + kind + "'");
  }
  return term;
}

json speed_term_to_json(const SpeedTerm& term) {
  switch (term.kind) {
    case SpeedTerm::Kind::Constant:
      return {{"kind", "constant"}, {"value", term.value}};
    case SpeedTerm::Kind::Linear:
      return {{"kind", "linear"}, {"slope", term.value}};
    case SpeedTerm::Kind::Sine:
      return {{"kind", "sine"},
              {"amplitude", term.value},
              {"frequency", term.frequency},
              {"phase", term.phase}};
    case SpeedTerm::Kind::Exponential:
      return {{"kind", "exp"}, {"amplitude", term.value}, {"rate", term.rate}};
  }
  return {};
}

}  // namespace

SynthSpec synth_spec_from_json(const std::string& json_text) {
  SynthSpec spec;
  try {
    const json j = json::parse(json_text);
    spec.space_points = j.value("K", spec.space_points);
    spec.time_steps = j.value("T", spec.time_steps);
    spec.dt = j.value("dt", spec.dt);
    spec.noise_sigma = j.value("noise_sigma", spec.noise_sigma);
    spec.seed = j.value("seed", spec.seed);
    for (const auto& p : j.value("pulses", json::array())) {
      PulseSpec pulse;
      const std::string shape = p.value("shape", "gaussian");
      if (shape == "gaussian")
        pulse.shape = PulseShape::Gaussian;
      else if (shape == "sawtooth")
        pulse.shape = PulseShape::Sawtooth;
      else
        fail(ErrorCode::Parse, "unknown pulse shape '" + shape + "'");
      pulse.amplitude = p.value("amplitude", pulse.amplitude);
      pulse.width = p.value("width", pulse.width);
      pulse.x0 = p.value("x0", pulse.x0);
      if (p.contains("speed")) {
        const auto& s = p.at("speed");
        if (s.is_number())
          pulse.speed.push_back({SpeedTerm::Kind::Constant, s.get<double>()});
        else
          for (const auto& term : s) pulse.speed.push_back(speed_term_from_json(term));
      }
      spec.pulses.push_back(std::move(pulse));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, std::string("synth spec JSON: ") + e.what());
  }
  spec.validate();
  return spec;
}

std::string synth_spec_to_json(const SynthSpec& spec) {
  json j;
  j["K"] = spec.space_points;
  j["T"] = spec.time_steps;
  j["dt"] = spec.dt;
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  j["pulses"] = json::array();
  for (const auto& p : spec.pulses) {
    json terms = json::array();
    for (const auto& t : p.speed) terms.push_back(speed_term_to_json(t));
    j["pulses"].push_back({{"shape", p.shape == PulseShape::Gaussian ? "gaussian" : "sawtooth"},
                           {"amplitude", p.amplitude},
                           {"width", p.width},
                           {"x0", p.x0},
                           {"speed", terms}});
  }
  return j.dump(2);
}

// ---------------------------------------------------------------------------

double variance_explained(const Eigen::Ref<const Eigen::MatrixXd>& truth,
                          const Eigen::Ref<const Eigen::MatrixXd>& prediction) {
  require(truth.rows() == prediction.rows() && truth.cols() == prediction.cols(),
          "variance_explained: shape mismatch");
  require(truth.size() > 0, "variance_explained: empty input");
  const double mean = truth.mean();
  const double sst = (truth.array() - mean).square().sum();
  if (!(sst > 0.0))
    fail(ErrorCode::UndefinedMetric, "variance explained is undefined for constant truth (SST = 0)");
  const double sse = (truth - prediction).squaredNorm();
  return 1.0 - sse / sst;
}

double variance_explained(const Field& truth, const Field& prediction) {
  return variance_explained(truth.values(), prediction.values());
}

std::vector<int> row_argmax(const Field& field) {
  std::vector<int> out(static_cast<std::size_t>(field.time_steps()));
  for (Eigen::Index r = 0; r < field.time_steps(); ++r) {
    Eigen::Index idx = 0;
    field.values().row(r).maxCoeff(&idx);
    out[static_cast<std::size_t>(r)] = static_cast<int>(idx);
  }
  return out;
}

}  // namespace rdrom
