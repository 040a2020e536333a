#pragma once

// Seeded experiment recipes shared by the command-line tool and the
// acceptance suite.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dbps/diagnostics.hpp"
#include "dbps/mmpp.hpp"
#include "dbps/sampler.hpp"
#include "dbps/surrogate.hpp"

namespace dbps {

/// Invalid or inconsistent experiment configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A target together with its replicate start-point law.
struct TargetSetup {
  TargetModel model;
  nlohmann::json spec;  // resolved target section
  Vec start_mean;
  Mat start_factor;  // start = mean + factor * z, z standard normal
  Vec natural_scales;  // per-coordinate scales used by the "target_scales" metric
  std::optional<MmppModel> mmpp;

  Vec draw_start(Rng& rng) const;
};

/// Target section:
///   {"name": "quartic", "d": 25, "lambda": "index" | <number> | [..]}
///   {"name": "logistic", "d": 25}
///   {"name": "gaussian", "mean": [..], "covariance": [[..]]} or {"scales": [..]}
///   {"name": "mmpp", "data": <file>} or {"name": "mmpp", "t_end": 25, "data_seed": 1}
TargetSetup make_target(const nlohmann::json& spec, bool paper_scale,
                        const std::filesystem::path& base_dir = {});

/// Sampler section: delta or log10_delta, eps, kappa or log10_kappa, n_cpt,
/// gradient ("analytic", "forward", "central", "surrogate") and metric
/// ("none", "target_scales", {"scales": [..]} or {"gamma": [[..]]}).
SamplerConfig make_sampler(const nlohmann::json& sampler, const TargetSetup& setup);

/// The sampler section with a sweep axis overridden.
nlohmann::json with_axis(nlohmann::json sampler, const std::string& axis, double value);

struct SweepSpec {
  std::string axis;  // delta, log10_delta, eps, kappa, log10_kappa or n_cpt
  std::vector<double> grid;
};

struct ConvergeSpec {
  std::vector<double> multipliers{10.0, 100.0, 1000.0};
  std::size_t cap = 10'000'000;
  std::size_t reference_iters = 100'000;
};

struct ExperimentConfig {
  std::string command;
  nlohmann::json target;
  std::uint64_t seed = 0;
  nlohmann::json sampler = nlohmann::json::object();
  std::size_t n_iters = 100'000;
  std::size_t thin = 10;
  std::size_t replicates = 1;
  double burn_in = 0.1;  // fraction of each run excluded from ESS
  double omega = 10.0;
  std::optional<SweepSpec> sweep;
  ConvergeSpec converge;
  nlohmann::json preconditioned = nlohmann::json::object();  // second sampler of `precondition`
  std::size_t equivalence_iters = 10'000;
  bool paper_scale = false;
  std::filesystem::path base_dir;

  /// Fully resolved configuration, echoed next to the outputs.
  nlohmann::json to_json() const;
  std::size_t burn_in_iters() const;
};

/// Parses and validates a configuration; `target` and `seed` are required.
/// Defaults depend on the command and on paper_scale.
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& command,
                              bool paper_scale, const std::filesystem::path& base_dir = {});

/// 16 hex digits of the FNV-1a hash of the resolved configuration.
std::string config_hash(const ExperimentConfig& cfg);

struct ReplicateResult {
  std::size_t grid = 0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  Vec x0;
  DiagnosticsSummary summary;
  double cpu_seconds = 0.0;
  std::shared_ptr<const ChainTrace> trace;  // only when kept
};

/// One run: the start point and then the chain seed are drawn from a stream
/// seeded with `seed`.
ReplicateResult run_replicate(const TargetSetup& setup, SamplerConfig sampler, std::size_t n_iters,
                              std::size_t thin, std::size_t burn_in, std::uint64_t seed,
                              bool keep_trace);

std::vector<ReplicateResult> run_replicates(const ExperimentConfig& cfg, const TargetSetup& setup,
                                            std::size_t workers, bool keep_traces);

/// Grid points x replicates, ordered by (grid, replicate).
std::vector<ReplicateResult> run_sweep(const ExperimentConfig& cfg, const TargetSetup& setup,
                                       std::size_t workers);

struct ConvergenceRow {
  double phi = 0.0;
  std::size_t replicate = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> n_cvg;
};

struct ConvergenceResult {
  double m_pi = 0.0;
  std::vector<ConvergenceRow> rows;
  double slope = 0.0;  // least squares of log10 n_cvg on log10 phi; capped rows enter at the cap
  bool any_capped = false;
};

ConvergenceResult run_convergence(const ExperimentConfig& cfg, const TargetSetup& setup,
                                  std::size_t workers);

/// Least-squares slope of y on x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y);

struct MmppVariantResult {
  std::string name;
  bool ok = false;
  std::string error;
  DiagnosticsSummary summary;
  double cpu_seconds = 0.0;
  std::vector<double> ess_per_cpu_second;
  double ess_lp_per_cpu_second = 0.0;
};

struct MmppStudyResult {
  std::size_t n_events = 0;
  double t_end = 0.0;
  std::optional<GaussianSurrogate> surrogate;
  std::string surrogate_error;
  double fit_cpu_seconds = 0.0;
  std::vector<MmppVariantResult> variants;  // full, n_cpt, surrogate
};

/// Central-difference full gradient, central-difference n_cpt and surrogate
/// variants at the same (delta, kappa), start point and seed. The surrogate is
/// fitted from theta = 0; its fitting time is reported separately and is not
/// charged to the surrogate run.
MmppStudyResult run_mmpp_study(const ExperimentConfig& cfg, const TargetSetup& setup,
                               std::size_t workers);

struct PreconditionResult {
  std::vector<ReplicateResult> plain;
  std::vector<ReplicateResult> preconditioned;
  double equivalence_deviation = 0.0;  // free-running coupled chains
  double step_deviation = 0.0;         // re-synchronized every iteration
  double ess_min_ratio = 0.0;  // mean preconditioned ess_min over mean plain ess_min
};

/// Plain sampler from `sampler`, preconditioned one from `preconditioned`.
PreconditionResult run_precondition_demo(const ExperimentConfig& cfg, const TargetSetup& setup,
                                         std::size_t workers);

}  // namespace dbps
