#include "dbps/diagnostics.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dbps {

std::vector<double> autocorrelation(const std::vector<double>& series, std::size_t max_lag) {
  const std::size_t n = series.size();
  if (n < 2) throw std::invalid_argument("autocorrelation: need at least two values");
  max_lag = std::min(max_lag, n - 1);
  const double mean = std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(n);
  std::size_t m = 1;
  while (m < 2 * n) m <<= 1;
  std::vector<double> padded(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) padded[i] = series[i] - mean;

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec;
  fft.fwd(spec, padded);
  for (auto& c : spec) c = std::norm(c);
  std::vector<double> acov;
  fft.inv(acov, spec);
  if (!(acov[0] > 0.0)) throw std::invalid_argument("autocorrelation: constant series");
  std::vector<double> rho(max_lag + 1);
  for (std::size_t k = 0; k <= max_lag; ++k) rho[k] = acov[k] / acov[0];
  return rho;
}

double ess(const std::vector<double>& series) {
  const std::size_t n = series.size();
  if (n < 100) throw std::invalid_argument("ess: need at least 100 values");
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) throw std::invalid_argument("ess: constant series");
  const std::vector<double> rho = autocorrelation(series, n - 1);

  double sum_pairs = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k + 1 < n; k += 2) {
    double pair = rho[k] + rho[k + 1];
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev);
    sum_pairs += pair;
    prev = pair;
  }
  const double tau = 2.0 * sum_pairs - 1.0;
  const double nd = static_cast<double>(n);
  if (!(tau > 1.0 / nd)) return nd;
  return std::min(nd, nd / tau);
}

std::optional<double> c_rms_from_dots(const std::vector<double>& dots) {
  if (dots.empty()) return std::nullopt;
  double s = 0.0;
  for (double d : dots) s += d * d;
  return std::sqrt(s / static_cast<double>(dots.size()));
}

SegmentStats segment_stats(const ChainTrace& trace) {
  SegmentStats s;
  const double n = static_cast<double>(trace.n_iters());
  if (n == 0.0) return s;
  s.f_b = static_cast<double>(trace.count(StepKind::bounce_accept)) / n;
  s.f_r = static_cast<double>(trace.count(StepKind::bounce_reject)) / n;
  std::vector<double> dots;
  dots.reserve(trace.segments.size());
  for (const auto& seg : trace.segments) dots.push_back(seg.dot);
  s.c_rms = c_rms_from_dots(dots);
  return s;
}

double efficiency_ratio(double f_b, double f_r, double omega) {
  if (omega < 0.0) throw std::invalid_argument("efficiency_ratio: omega must be >= 0");
  return f_b / (1.0 + omega * (f_b + f_r));
}

std::optional<std::size_t> convergence_time(const std::vector<double>& log_pi, double m_pi) {
  for (std::size_t i = 0; i < log_pi.size(); ++i) {
    if (log_pi[i] > m_pi) return i;
  }
  return std::nullopt;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty series");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double reference_median_logpi(const ChainTrace& trace) { return median(trace.log_pi); }

namespace {

double ess_or_one(const std::vector<double>& series) {
  const auto [lo, hi] = std::minmax_element(series.begin(), series.end());
  if (*lo == *hi) return 1.0;
  return ess(series);
}

}  // namespace

DiagnosticsSummary summarize(const ChainTrace& trace, std::size_t burn_in) {
  DiagnosticsSummary s;
  s.n_iters = trace.n_iters();
  const SegmentStats seg = segment_stats(trace);
  s.f_b = seg.f_b;
  s.f_r = seg.f_r;
  s.c_rms = seg.c_rms;
  s.n_degenerate = trace.count(StepKind::degenerate_skip);
  s.evaluations = trace.evaluations;

  const std::size_t skip = (burn_in + trace.thin - 1) / trace.thin;
  const std::vector<double> lp = trace.thinned_log_pi();
  if (skip >= lp.size()) throw std::invalid_argument("summarize: burn-in covers the whole trace");
  s.ess_lp = ess_or_one(std::vector<double>(lp.begin() + static_cast<std::ptrdiff_t>(skip), lp.end()));
  s.ess.resize(static_cast<std::size_t>(trace.dim));
  const Index cols = trace.positions.cols();
  for (Index i = 0; i < trace.dim; ++i) {
    std::vector<double> xi;
    xi.reserve(static_cast<std::size_t>(cols));
    for (Index c = static_cast<Index>(skip); c < cols; ++c) xi.push_back(trace.positions(i, c));
    s.ess[static_cast<std::size_t>(i)] = ess_or_one(xi);
  }
  s.ess_min = *std::min_element(s.ess.begin(), s.ess.end());
  return s;
}

nlohmann::json to_json(const DiagnosticsSummary& s) {
  nlohmann::json j;
  j["n_iters"] = s.n_iters;
  j["f_b"] = s.f_b;
  j["f_r"] = s.f_r;
  j["c_rms"] = s.c_rms ? nlohmann::json(*s.c_rms) : nlohmann::json(nullptr);
  j["ess_min"] = s.ess_min;
  j["ess_lp"] = s.ess_lp;
  j["ess"] = s.ess;
  j["n_degenerate"] = s.n_degenerate;
  j["evaluations"] = s.evaluations;
  return j;
}

}  // namespace dbps
