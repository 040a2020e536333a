#include "dbps/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace dbps {

void SamplerConfig::validate(Index dim) const {
  if (!(delta > 0.0) || !std::isfinite(delta)) {
    throw std::invalid_argument("sampler: delta must be positive and finite");
  }
  if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("sampler: eps must lie in [0,1]");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) {
    throw std::invalid_argument("sampler: kappa must be non-negative and finite");
  }
  if (eps > 0.0 && kappa > 0.0) {
    throw std::invalid_argument("sampler: eps and kappa cannot both be positive");
  }
  if (n_cpt && (*n_cpt < 2 || *n_cpt > dim)) {
    throw std::invalid_argument("sampler: n_cpt must lie in [2, d]");
  }
  if (gradient_mode == GradientMode::surrogate && !surrogate) {
    throw std::invalid_argument("sampler: surrogate gradient mode needs a fitted surrogate");
  }
  if (metric) require_same_size(metric->dim(), dim, "sampler metric");
}

char kind_code(StepKind kind) {
  switch (kind) {
    case StepKind::plain_accept: return 'A';
    case StepKind::bounce_accept: return 'B';
    case StepKind::bounce_reject: return 'R';
    case StepKind::degenerate_skip: return 'S';
  }
  return '?';
}

StepKind kind_from_code(char code) {
  switch (code) {
    case 'A': return StepKind::plain_accept;
    case 'B': return StepKind::bounce_accept;
    case 'R': return StepKind::bounce_reject;
    case 'S': return StepKind::degenerate_skip;
    default: break;
  }
  throw std::invalid_argument(std::string("unknown step kind code '") + code + "'");
}

double accept_prob(double log_pi_x, double log_pi_xp) {
  if (std::isinf(log_pi_x) && log_pi_x < 0.0 && std::isinf(log_pi_xp) && log_pi_xp < 0.0) {
    throw std::invalid_argument("accept_prob: both log densities are -inf");
  }
  const double r = log_pi_xp - log_pi_x;
  return r >= 0.0 ? 1.0 : std::exp(r);
}

double dr_accept_prob(double log_pi_x, double log_pi_xp, double log_pi_xpp) {
  const double r1 = log_pi_xp - log_pi_x;
  if (r1 >= 0.0) throw std::logic_error("dr_accept_prob: stage one could not have been rejected");
  if (std::isinf(log_pi_xpp) && log_pi_xpp < 0.0) return 0.0;
  const double r2 = log_pi_xp - log_pi_xpp;
  if (r2 >= 0.0) return 0.0;  // alpha(x'', x') = 1
  // log of the ratio of the 1 - alpha terms
  const double log_num = std::log(-std::expm1(r2));
  const double log_den = std::log(-std::expm1(r1));
  const double log_a = log_num - log_den + (log_pi_xpp - log_pi_x);
  return log_a >= 0.0 ? 1.0 : std::exp(log_a);
}

DbpsKernel::DbpsKernel(const TargetModel& target, SamplerConfig cfg)
    : target_(&target),
      cfg_(std::move(cfg)),
      provider_(target, cfg_.gradient_mode, cfg_.surrogate) {
  cfg_.validate(target.dim);
}

double DbpsKernel::evaluate(const Vec& x) {
  ++evaluations_;
  const double lp = target_->log_density(x);
  if (std::isnan(lp) || (std::isinf(lp) && lp > 0.0)) {
    throw std::runtime_error("target '" + target_->name + "' returned NaN or +inf");
  }
  return lp;
}

Vec DbpsKernel::initial_velocity(Rng& rng) const {
  Vec u = sample_unit_sphere<double>(target_->dim, rng);
  return preconditioned() ? cfg_.metric->from_transformed(u) : u;
}

Vec DbpsKernel::transformed_velocity(const Vec& u) const {
  return preconditioned() ? cfg_.metric->to_transformed(u) : u;
}

std::optional<Vec> DbpsKernel::bounce_velocity(const PhaseState& state, const Vec& x1, double lp1,
                                               Rng& rng) {
  try {
    if (cfg_.n_cpt) {
      // partial gradient, built in the transformed space
      const Vec us = transformed_velocity(state.u);
      const Mat frame = sample_orthonormal_frame(us, *cfg_.n_cpt, rng);
      const Mat directions = preconditioned() ? Mat(cfg_.metric->inverse_factor() * frame) : frame;
      const Vec c = provider_.directional(x1, directions, lp1, evaluations_);
      const Vec g_sub = frame * c;
      if (!(norm(g_sub) > kTolGrad)) return std::nullopt;
      const Vec zeta = combine_directions_from_coefficients(frame, c);
      Vec u2 = subset_reflect(us, g_sub, zeta);
      if (cfg_.eps > 0.0) u2 = perturb_bounce(u2, g_sub, cfg_.eps, rng);
      return preconditioned() ? cfg_.metric->from_transformed(u2) : u2;
    }
    const Vec g = provider_.gradient(x1, lp1, evaluations_);
    if (!(norm(g) > kTolGrad)) return std::nullopt;
    if (!preconditioned()) {
      Vec u2 = reflect(state.u, g);
      if (cfg_.eps > 0.0) u2 = perturb_bounce(u2, g, cfg_.eps, rng);
      return u2;
    }
    if (cfg_.eps == 0.0) return reflect_precond(state.u, g, *cfg_.metric);
    const Vec gs = cfg_.metric->transform_gradient(g);
    const Vec u2 = perturb_bounce(reflect(transformed_velocity(state.u), gs), gs, cfg_.eps, rng);
    return cfg_.metric->from_transformed(u2);
  } catch (const DegenerateDirection&) {
  } catch (const DegenerateConfiguration&) {
  } catch (const FiniteDifferenceError&) {
  }
  return std::nullopt;
}

StepOutcome DbpsKernel::step(PhaseState& state, Rng& rng) {
  if (std::isnan(state.log_pi)) state.log_pi = evaluate(state.x);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  StepOutcome out;

  const double lp0 = state.log_pi;
  Vec x1 = state.x + cfg_.delta * state.u;
  const double lp1 = evaluate(x1);
  if (unif(rng) < accept_prob(lp0, lp1)) {
    // (x', -u) accepted, then flipped back to u
    state.x = x1;
    state.log_pi = lp1;
    out.kind = StepKind::plain_accept;
    out.x_proposed = std::move(x1);
  } else {
    const std::optional<Vec> u2 = bounce_velocity(state, x1, lp1, rng);
    if (!u2) {
      out.kind = StepKind::degenerate_skip;
      out.x_proposed = std::move(x1);
      state.u = -state.u;
    } else {
      Vec x2 = x1 - cfg_.delta * *u2;
      const double lp2 = evaluate(x2);
      if (unif(rng) < dr_accept_prob(lp0, lp1, lp2)) {
        state.x = x2;
        state.log_pi = lp2;
        state.u = -*u2;
        out.kind = StepKind::bounce_accept;
      } else {
        state.u = -state.u;
        out.kind = StepKind::bounce_reject;
      }
      out.x_proposed = std::move(x2);
    }
  }

  if (cfg_.kappa > 0.0) {
    if (preconditioned()) {
      const Vec us = cfg_.metric->to_transformed(state.u);
      state.u = cfg_.metric->from_transformed(perturb_velocity(us, cfg_.kappa, cfg_.delta, rng));
    } else {
      state.u = perturb_velocity(state.u, cfg_.kappa, cfg_.delta, rng);
    }
  }
  out.log_pi = state.log_pi;
  return out;
}

std::pair<PhaseState, StepOutcome> dbps_step(const PhaseState& state, const SamplerConfig& cfg,
                                             const TargetModel& target, Rng& rng) {
  require_same_size(state.x.size(), target.dim, "dbps_step");
  require_same_size(state.u.size(), target.dim, "dbps_step");
  DbpsKernel kernel(target, cfg);
  PhaseState next = state;
  StepOutcome out = kernel.step(next, rng);
  return {std::move(next), std::move(out)};
}

Chain::Chain(const TargetModel& target, SamplerConfig cfg, PhaseState init)
    : kernel_(target, std::move(cfg)), rng_(kernel_.config().seed), state_(std::move(init)) {
  require_same_size(state_.x.size(), target.dim, "chain initial position");
  if (state_.u.size() == 0) state_.u = kernel_.initial_velocity(rng_);
  require_same_size(state_.u.size(), target.dim, "chain initial velocity");
  if (std::isnan(state_.log_pi)) state_.log_pi = kernel_.evaluate(state_.x);
}

std::size_t ChainTrace::count(StepKind kind) const {
  return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), kind));
}

std::vector<double> ChainTrace::thinned_log_pi() const {
  std::vector<double> out;
  out.reserve(log_pi.size() / thin);
  for (std::size_t i = thin; i <= log_pi.size(); i += thin) out.push_back(log_pi[i - 1]);
  return out;
}

ChainTrace run_chain(PhaseState init, std::size_t n_iters, std::size_t thin,
                     const SamplerConfig& cfg, const TargetModel& target,
                     const RunOptions& options) {
  if (n_iters < 1 || thin < 1) throw std::invalid_argument("run_chain: n_iters and thin must be >= 1");
  Chain chain(target, cfg, std::move(init));
  if (!std::isfinite(chain.state().log_pi)) {
    throw std::runtime_error("run_chain: log pi at the initial position is not finite");
  }
  ChainTrace trace;
  trace.dim = target.dim;
  trace.thin = thin;
  trace.initial_x = chain.state().x;
  trace.initial_log_pi = chain.state().log_pi;
  trace.log_pi.reserve(n_iters);
  trace.kinds.reserve(n_iters);
  trace.positions.resize(target.dim, static_cast<Index>(n_iters / thin));

  const DbpsKernel& kernel = chain.kernel();
  std::optional<std::size_t> last_event;
  Vec seg_start;
  for (std::size_t it = 1; it <= n_iters; ++it) {
    Vec u_before;
    if (last_event) u_before = chain.state().u;
    const StepOutcome out = chain.step();
    trace.kinds.push_back(out.kind);
    trace.log_pi.push_back(out.log_pi);
    if (it % thin == 0) trace.positions.col(static_cast<Index>(it / thin - 1)) = chain.state().x;
    if (!is_dr_event(out.kind)) continue;
    trace.dr_events.push_back(it);
    if (last_event) {
      SegmentRecord seg;
      seg.start_iter = *last_event;
      seg.end_iter = it;
      const Vec seg_end = kernel.transformed_velocity(u_before);
      seg.dot = dot(seg_start, seg_end);
      if (options.keep_segment_velocities) {
        seg.u_start = seg_start;
        seg.u_end = seg_end;
      }
      trace.segments.push_back(std::move(seg));
    }
    last_event = it;
    seg_start = kernel.transformed_velocity(chain.state().u);
  }
  trace.evaluations = chain.evaluations();
  return trace;
}

std::vector<std::pair<double, double>> dr_rejection_scaling(const TargetModel& target,
                                                            const Mat& cloud,
                                                            const std::vector<double>& deltas,
                                                            std::size_t n_per_delta, Rng& rng) {
  if (!target.has_gradient()) {
    throw std::invalid_argument("dr_rejection_scaling: target needs an analytic gradient");
  }
  require_same_size(cloud.rows(), target.dim, "dr_rejection_scaling cloud");
  if (cloud.cols() < 1 || n_per_delta < 1) {
    throw std::invalid_argument("dr_rejection_scaling: empty cloud or sample count");
  }
  std::vector<Vec> xs;
  std::vector<Vec> us;
  xs.reserve(n_per_delta);
  us.reserve(n_per_delta);
  for (std::size_t i = 0; i < n_per_delta; ++i) {
    Vec x = cloud.col(static_cast<Index>(i % static_cast<std::size_t>(cloud.cols())));
    Vec u = sample_unit_sphere<double>(target.dim, rng);
    if (dot(u, target.gradient(x)) > 0.0) u = -u;
    xs.push_back(std::move(x));
    us.push_back(std::move(u));
  }
  std::vector<std::pair<double, double>> curve;
  for (double delta : deltas) {
    // each case is weighted by its stage-one rejection probability, so the
    // mean is over stage-one rejections as the chain would produce them
    double weighted = 0.0;
    double weight = 0.0;
    for (std::size_t i = 0; i < n_per_delta; ++i) {
      const Vec& x = xs[i];
      const Vec& u = us[i];
      const double lp0 = target.log_density(x);
      const Vec x1 = x + delta * u;
      const double lp1 = target.log_density(x1);
      const double w = 1.0 - accept_prob(lp0, lp1);
      if (!(w > 0.0)) continue;
      const Vec g = target.gradient(x1);
      if (!(norm(g) > kTolGrad)) continue;
      const Vec x2 = x1 - delta * reflect(u, g);
      weighted += w * (1.0 - dr_accept_prob(lp0, lp1, target.log_density(x2)));
      weight += w;
    }
    curve.emplace_back(delta, weight > 0.0 ? weighted / weight
                                           : std::numeric_limits<double>::quiet_NaN());
  }
  return curve;
}

double precondition_equivalence_check(const TargetModel& target, const Metric& metric,
                                      SamplerConfig cfg, std::size_t n_iters, const Vec& x0) {
  SamplerConfig plain = cfg;
  plain.metric.reset();
  cfg.metric = metric;
  const TargetModel transformed = transformed_target(target, metric);

  PhaseState a;
  a.x = x0;
  PhaseState b;
  b.x = metric.to_transformed(x0);
  Chain original(target, cfg, a);
  Chain star(transformed, plain, b);

  auto deviation = [&]() {
    return (metric.to_transformed(original.state().x) - star.state().x).cwiseAbs().maxCoeff();
  };
  double worst = deviation();
  for (std::size_t i = 0; i < n_iters; ++i) {
    original.step();
    star.step();
    worst = std::max(worst, deviation());
  }
  return worst;
}

double precondition_step_deviation(const TargetModel& target, const Metric& metric,
                                   SamplerConfig cfg, std::size_t n_iters, const Vec& x0) {
  SamplerConfig plain = cfg;
  plain.metric.reset();
  cfg.metric = metric;
  const TargetModel transformed = transformed_target(target, metric);
  DbpsKernel pre(target, cfg);
  DbpsKernel star(transformed, plain);
  Rng rng(cfg.seed);
  PhaseState state;
  state.x = x0;
  state.u = pre.initial_velocity(rng);
  state.log_pi = pre.evaluate(state.x);
  double worst = 0.0;
  for (std::size_t i = 0; i < n_iters; ++i) {
    PhaseState s;
    s.x = metric.to_transformed(state.x);
    s.u = metric.to_transformed(state.u);
    s.log_pi = star.evaluate(s.x);
    Rng copy = rng;
    pre.step(state, rng);
    star.step(s, copy);
    worst = std::max(worst, (metric.to_transformed(state.x) - s.x).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace dbps
