#include "rdrom/spectrum.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rdrom/error.hpp"

namespace rdrom {

namespace {

std::size_t padded_length(Eigen::Index n, int pad_factor) {
  std::size_t len = 1;
  while (len < static_cast<std::size_t>(n) * static_cast<std::size_t>(pad_factor)) len <<= 1;
  return len;
}

// Power at each bin 0..n/2 of the zero-padded, de-meaned series.
std::vector<double> real_power(const Eigen::VectorXd& series, std::size_t len) {
  const double mean = series.mean();
  double* in = fftw_alloc_real(len);
  fftw_complex* out = fftw_alloc_complex(len / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(len), in, out, FFTW_ESTIMATE);
  std::fill(in, in + len, 0.0);
  for (Eigen::Index i = 0; i < series.size(); ++i) in[i] = series(i) - mean;
  fftw_execute(plan);
  std::vector<double> power(len / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) power[k] = out[k][0] * out[k][0] + out[k][1] * out[k][1];
  fftw_destroy_plan(plan);
  fftw_free(in);
  fftw_free(out);
  return power;
}

// Sub-bin offset from a parabola through log-power at k-1, k, k+1.
double refine(double left, double mid, double right) {
  const double a = std::log(left + 1e-300), b = std::log(mid + 1e-300), c = std::log(right + 1e-300);
  const double denom = a - 2.0 * b + c;
  if (!(denom < 0.0)) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

void check(const auto& series, double dt, int pad_factor) {
  require(series.size() >= 4, "spectrum: series needs at least 4 samples");
  require(dt > 0.0, "spectrum: dt must be > 0");
  require(pad_factor >= 1, "spectrum: pad factor must be >= 1");
  if (!series.allFinite()) fail(ErrorCode::Numerical, "spectrum: series is not finite");
}

}  // namespace

std::vector<double> spectral_peaks(const Eigen::VectorXd& series, double dt, int count,
                                   int pad_factor) {
  check(series, dt, pad_factor);
  require(count >= 1, "spectral_peaks: count must be >= 1");
  const std::size_t len = padded_length(series.size(), pad_factor);
  const auto power = real_power(series, len);
  // Local maxima of the padded spectrum, strongest first, at least one
  // unpadded bin apart.
  std::vector<std::size_t> maxima;
  for (std::size_t k = 1; k + 1 < power.size(); ++k)
    if (power[k] > power[k - 1] && power[k] >= power[k + 1]) maxima.push_back(k);
  std::stable_sort(maxima.begin(), maxima.end(), [&](auto a, auto b) { return power[a] > power[b]; });
  const double min_gap = static_cast<double>(pad_factor);
  std::vector<double> bins;
  for (std::size_t k : maxima) {
    const double pos = static_cast<double>(k) + refine(power[k - 1], power[k], power[k + 1]);
    if (std::all_of(bins.begin(), bins.end(), [&](double b) { return std::abs(b - pos) >= min_gap; }))
      bins.push_back(pos);
    if (static_cast<int>(bins.size()) == count) break;
  }
  std::vector<double> out;
  for (double b : bins) out.push_back(2.0 * std::numbers::pi * b / (static_cast<double>(len) * dt));
  return out;
}

double dominant_frequency(const Eigen::VectorXd& series, double dt, int pad_factor) {
  const auto peaks = spectral_peaks(series, dt, 1, pad_factor);
  return peaks.empty() ? 0.0 : peaks.front();
}

std::vector<double> spectral_peaks(const Eigen::VectorXcd& series, double dt, int count,
                                   int pad_factor) {
  check(series, dt, pad_factor);
  require(count >= 1, "spectral_peaks: count must be >= 1");
  const std::size_t len = padded_length(series.size(), pad_factor);
  fftw_complex* buf = fftw_alloc_complex(len);
  // Forward transform (kernel exp(-2 pi i k n / len)): exp(+i w t) lands on the +w bin.
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(len), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  for (std::size_t i = 0; i < len; ++i) buf[i][0] = buf[i][1] = 0.0;
  for (Eigen::Index i = 0; i < series.size(); ++i) {
    buf[i][0] = series(i).real();
    buf[i][1] = series(i).imag();
  }
  fftw_execute(plan);
  std::vector<double> power(len);
  for (std::size_t k = 0; k < len; ++k) power[k] = buf[k][0] * buf[k][0] + buf[k][1] * buf[k][1];
  fftw_destroy_plan(plan);
  fftw_free(buf);

  auto at = [&](std::size_t k, int d) { return d < 0 ? power[(k + len - 1) % len] : power[(k + 1) % len]; };
  std::vector<std::size_t> maxima;
  for (std::size_t k = 0; k < len; ++k)
    if (power[k] > at(k, -1) && power[k] >= at(k, 1)) maxima.push_back(k);
  std::stable_sort(maxima.begin(), maxima.end(), [&](auto a, auto b) { return power[a] > power[b]; });
  const double half = static_cast<double>(len) / 2.0;
  auto circular = [&](double a, double b) {
    const double d = std::abs(a - b);
    return std::min(d, static_cast<double>(len) - d);
  };
  std::vector<double> bins;
  for (std::size_t k : maxima) {
    double pos = static_cast<double>(k) + refine(at(k, -1), power[k], at(k, 1));
    if (std::all_of(bins.begin(), bins.end(), [&](double b) { return circular(b, pos) >= pad_factor; }))
      bins.push_back(pos);
    if (static_cast<int>(bins.size()) == count) break;
  }
  std::vector<double> out;
  for (double b : bins) {
    if (b >= half) b -= static_cast<double>(len);
    out.push_back(2.0 * std::numbers::pi * b / (static_cast<double>(len) * dt));
  }
  return out;
}

double dominant_frequency(const Eigen::VectorXcd& series, double dt, int pad_factor) {
  return spectral_peaks(series, dt, 1, pad_factor).front();
}

}  // namespace rdrom
