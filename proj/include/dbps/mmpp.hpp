#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "dbps/targets.hpp"
#include "dbps/types.hpp"

namespace dbps {

/// exp(A) by scaling and squaring with a diagonal Pade approximant of degree
/// 3, 5, 7, 9 or 13 chosen from the 1-norm of A.
Mat matexp(const Mat& a);

/// Markov-modulated Poisson process: a k-state continuous-time chain started
/// in state 1 drives the rate of a Poisson process observed on [0, t_end].
///
/// The parameter vector theta holds natural logs of the free rates, ordered
/// as log(lambda_1..lambda_k) followed by log(Q_ij) for each free (i, j).
struct MmppModel {
  int k = 1;
  std::vector<std::pair<int, int>> free_rates;  // zero-based off-diagonal entries of Q
  std::vector<double> events;                   // strictly increasing, in [0, t_end]
  double t_end = 0.0;
  double prior_sd = 2.0;

  Index dim() const { return k + static_cast<Index>(free_rates.size()); }
  void validate() const;
};

struct MmppRates {
  Mat q;       // generator, rows sum to zero
  Vec lambda;  // event rate in each state
};

MmppRates rates_from_theta(const MmppModel& model, const Vec& theta);
Vec theta_from_rates(const MmppModel& model, const MmppRates& rates);

/// Generator with the given off-diagonal rates and diagonal minus the row sums.
Mat make_generator(int k, const std::vector<std::pair<int, int>>& free_rates,
                   const std::vector<double>& values);

/// Cyclic 4-state chain 1->2->3->4->1 with rates (2, 1, 0.5, 0.5) and Poisson
/// rates (15, 5, 1, 10).
MmppRates reference_mmpp_rates();
/// Free-rate pattern of the cyclic 4-state chain.
std::vector<std::pair<int, int>> cyclic_pattern(int k);

/// log L for explicit rates. The propagated row vector is renormalized to unit
/// 1-norm after every factor and the log normalizers are accumulated.
double mmpp_log_likelihood(const MmppRates& rates, const std::vector<double>& events,
                           double t_end);
double mmpp_log_likelihood(const MmppModel& model, const Vec& theta);
/// Likelihood plus independent N(0, prior_sd^2) priors on every log-rate.
double mmpp_log_posterior(const MmppModel& model, const Vec& theta);

TargetModel mmpp_target(const MmppModel& model);

/// Exact simulation: Gillespie jumps of the modulating chain from state 1 and
/// exponential inter-event gaps within each sojourn.
std::vector<double> simulate_mmpp(const MmppRates& rates, double t_end, Rng& rng);

/// Stationary law of a generator (solves p Q = 0, sum p = 1).
Vec stationary_distribution(const Mat& q);

struct MmppData {
  double t_end = 0.0;
  std::vector<double> events;
};

/// Text format: first line `t_end=<seconds>`, then one event time per line.
MmppData read_mmpp_data(const std::filesystem::path& path);
MmppData parse_mmpp_data(const std::string& text);
void write_mmpp_data(const std::filesystem::path& path, const MmppData& data);

}  // namespace dbps
