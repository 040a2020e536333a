#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dbps/sampler.hpp"
#include "dbps/types.hpp"

namespace dbps {

/// Normalized autocorrelations rho_0..rho_{max_lag} of a series, computed by
/// FFT of the demeaned, zero-padded series.
std::vector<double> autocorrelation(const std::vector<double>& series, std::size_t max_lag);

/// Effective sample size n / (1 + 2 sum rho_k), truncated by Geyer's initial
/// monotone positive sequence on pairs (rho_2m + rho_2m+1). Clamped to (0, n].
/// Throws std::invalid_argument for fewer than 100 values or a constant series.
double ess(const std::vector<double>& series);

struct SegmentStats {
  double f_b = 0.0;
  double f_r = 0.0;
  std::optional<double> c_rms;  // empty with fewer than two DR events
};

SegmentStats segment_stats(const ChainTrace& trace);

/// c_rms from the inner products <u_start, u_end> of the segments.
std::optional<double> c_rms_from_dots(const std::vector<double>& dots);

/// f_b / (1 + omega (f_b + f_r))
double efficiency_ratio(double f_b, double f_r, double omega);

/// First index whose value strictly exceeds m_pi.
std::optional<std::size_t> convergence_time(const std::vector<double>& log_pi, double m_pi);

double median(std::vector<double> values);
double reference_median_logpi(const ChainTrace& trace);

struct DiagnosticsSummary {
  std::size_t n_iters = 0;
  double f_b = 0.0;
  double f_r = 0.0;
  std::optional<double> c_rms;
  std::vector<double> ess;  // per coordinate, thinned positions
  double ess_min = 0.0;
  double ess_lp = 0.0;  // thinned log pi series
  std::size_t n_degenerate = 0;
  std::uint64_t evaluations = 0;
};

/// Diagnostics of a trace. The first `burn_in` iterations are dropped from the
/// ESS series (not from f_b, f_r or c_rms). A coordinate that never moved gets
/// ESS 1.
DiagnosticsSummary summarize(const ChainTrace& trace, std::size_t burn_in = 0);

nlohmann::json to_json(const DiagnosticsSummary& s);

}  // namespace dbps
