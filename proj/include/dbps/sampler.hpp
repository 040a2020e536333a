#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "dbps/geometry.hpp"
#include "dbps/surrogate.hpp"
#include "dbps/targets.hpp"
#include "dbps/types.hpp"

namespace dbps {

/// Position and velocity of the particle. `log_pi` caches log pi(x).
struct PhaseState {
  Vec x;
  Vec u;
  double log_pi = std::numeric_limits<double>::quiet_NaN();
};

struct SamplerConfig {
  double delta = 1.0;  // time step
  double eps = 0.0;    // bounce perturbation in [0, 1]
  double kappa = 0.0;  // velocity diffusion rate
  std::optional<Metric> metric;
  std::optional<int> n_cpt;  // gradient components per bounce; empty = full gradient
  GradientMode gradient_mode = GradientMode::analytic;
  std::shared_ptr<const GaussianSurrogate> surrogate;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on a violated constraint.
  void validate(Index dim) const;
};

enum class StepKind : std::uint8_t { plain_accept, bounce_accept, bounce_reject, degenerate_skip };

/// Single-letter codes A, B, R, S used in trace files.
char kind_code(StepKind kind);
StepKind kind_from_code(char code);

inline bool is_dr_event(StepKind k) {
  return k == StepKind::bounce_accept || k == StepKind::bounce_reject;
}

struct StepOutcome {
  StepKind kind = StepKind::plain_accept;
  Vec x_proposed;  // last point proposed in the iteration
  double log_pi = 0.0;  // log density at the state after the iteration
};

/// 1 ^ pi(x')/pi(x), in log space.
double accept_prob(double log_pi_x, double log_pi_xp);

/// Second-stage acceptance 1 ^ [(1 - a(x'',x')) / (1 - a(x,x'))] pi(x'')/pi(x).
/// Throws std::logic_error if the first stage could not have been rejected.
double dr_accept_prob(double log_pi_x, double log_pi_xp, double log_pi_xpp);

/// The DBPS transition kernel bound to one target and configuration.
///
/// Random numbers are consumed in a fixed order each iteration: the stage-one
/// uniform; then, only on a stage-one rejection, the partial-gradient frame,
/// the bounce perturbation and the stage-two uniform; finally the velocity
/// diffusion draws.
class DbpsKernel {
 public:
  DbpsKernel(const TargetModel& target, SamplerConfig cfg);

  StepOutcome step(PhaseState& state, Rng& rng);

  /// Log pi at x, counted as one evaluation.
  double evaluate(const Vec& x);

  /// Velocity drawn uniformly on the unit sphere of the (transformed) metric.
  Vec initial_velocity(Rng& rng) const;

  /// M u under preconditioning, u otherwise.
  Vec transformed_velocity(const Vec& u) const;

  const SamplerConfig& config() const { return cfg_; }
  const TargetModel& target() const { return *target_; }
  std::uint64_t evaluations() const { return evaluations_; }

 private:
  std::optional<Vec> bounce_velocity(const PhaseState& state, const Vec& x1, double lp1,
                                     Rng& rng);
  bool preconditioned() const { return cfg_.metric && !cfg_.metric->is_identity(); }

  const TargetModel* target_;
  SamplerConfig cfg_;
  GradientProvider provider_;
  std::uint64_t evaluations_ = 0;
};

/// One transition from `state`; uses a fresh kernel, so evaluation counts are
/// not carried across calls.
std::pair<PhaseState, StepOutcome> dbps_step(const PhaseState& state, const SamplerConfig& cfg,
                                             const TargetModel& target, Rng& rng);

/// Stateful chain: kernel plus its own random stream seeded from cfg.seed.
/// An empty init.u is replaced by a uniform draw (the first use of the stream).
class Chain {
 public:
  Chain(const TargetModel& target, SamplerConfig cfg, PhaseState init);

  StepOutcome step() { return kernel_.step(state_, rng_); }
  const PhaseState& state() const { return state_; }
  const DbpsKernel& kernel() const { return kernel_; }
  std::uint64_t evaluations() const { return kernel_.evaluations(); }

 private:
  DbpsKernel kernel_;
  Rng rng_;
  PhaseState state_;
};

struct SegmentRecord {
  std::size_t start_iter = 0;  // iteration of the DR event opening the segment
  std::size_t end_iter = 0;    // iteration of the DR event closing it
  double dot = 0.0;            // <u_start, u_end> between transformed unit velocities
  Vec u_start;                 // only filled when velocities are kept
  Vec u_end;
};

/// Record of a run. Iterations are numbered from 1; positions hold the state
/// after every thin-th iteration.
struct ChainTrace {
  Index dim = 0;
  std::size_t thin = 1;
  Vec initial_x;
  double initial_log_pi = 0.0;
  std::vector<double> log_pi;
  std::vector<StepKind> kinds;
  Mat positions;
  std::vector<std::size_t> dr_events;
  std::vector<SegmentRecord> segments;
  std::uint64_t evaluations = 0;

  std::size_t n_iters() const { return kinds.size(); }
  std::size_t count(StepKind kind) const;
  /// log pi at the iterations whose positions were kept.
  std::vector<double> thinned_log_pi() const;
};

struct RunOptions {
  bool keep_segment_velocities = false;
};

ChainTrace run_chain(PhaseState init, std::size_t n_iters, std::size_t thin,
                     const SamplerConfig& cfg, const TargetModel& target,
                     const RunOptions& options = {});

/// Mean delayed-rejection rejection probability 1 - alpha_DR given a
/// stage-one rejection, for each delta: every (x, u) contributes with weight
/// 1 - alpha(x, x'). Positions cycle through the columns of `cloud`;
/// velocities are uniform, negated where they point uphill. The same (x, u)
/// draws are reused for every delta.
std::vector<std::pair<double, double>> dr_rejection_scaling(const TargetModel& target,
                                                            const Mat& cloud,
                                                            const std::vector<double>& deltas,
                                                            std::size_t n_per_delta, Rng& rng);

/// Runs the preconditioned chain on pi from x0 and the plain chain on the
/// transformed target from M x0 with the same seed, and returns
/// max_n |M x_n - x*_n|_inf.
double precondition_equivalence_check(const TargetModel& target, const Metric& metric,
                                      SamplerConfig cfg, std::size_t n_iters, const Vec& x0);

/// Per-transition form of the same identity: along the preconditioned chain,
/// each step is repeated by the plain kernel on the transformed target from
/// (M x_n, M u_n) with a copy of the random stream. Returns the largest
/// one-step deviation |M x_{n+1} - x*_{n+1}|_inf. Rounding differences are
/// not carried from one step to the next, unlike in the free-running check,
/// where they grow geometrically through the bounces.
double precondition_step_deviation(const TargetModel& target, const Metric& metric,
                                   SamplerConfig cfg, std::size_t n_iters, const Vec& x0);

}  // namespace dbps
