#include "dbps/targets.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dbps/surrogate.hpp"

namespace dbps {

namespace {

constexpr double kEpsMach = std::numeric_limits<double>::epsilon();

// log(1 + e^y) without overflow
double log1p_exp(double y) {
  return y > 0.0 ? y + std::log1p(std::exp(-y)) : std::log1p(std::exp(y));
}

double logistic(double y) {
  if (y >= 0.0) return 1.0 / (1.0 + std::exp(-y));
  const double e = std::exp(y);
  return e / (1.0 + e);
}

double checked_eval(const ScalarField& f, const Vec& x) {
  const double v = f(x);
  if (!std::isfinite(v)) {
    throw FiniteDifferenceError("finite difference stencil left the support");
  }
  return v;
}

}  // namespace

TargetModel quartic_target(const Vec& lambdas) {
  if (lambdas.size() < 1 || (lambdas.array() <= 0.0).any()) {
    throw std::invalid_argument("quartic_target: lambdas must be positive");
  }
  const Vec w = lambdas.array().pow(4).inverse().matrix();
  TargetModel t;
  t.name = "quartic";
  t.dim = lambdas.size();
  t.log_density = [w](const Vec& x) {
    return -0.25 * (x.array().square().square() * w.array()).sum();
  };
  t.gradient = [w](const Vec& x) -> Vec { return -(x.array().cube() * w.array()).matrix(); };
  return t;
}

TargetModel logistic_target(Index d) {
  if (d < 1) throw std::invalid_argument("logistic_target: d must be >= 1");
  TargetModel t;
  t.name = "logistic";
  t.dim = d;
  t.log_density = [](const Vec& x) {
    double s = 0.0;
    for (Index i = 0; i < x.size(); ++i) {
      const double y = x[i] / static_cast<double>(i + 1);
      s += y - 2.0 * log1p_exp(y);
    }
    return s;
  };
  t.gradient = [](const Vec& x) -> Vec {
    Vec g(x.size());
    for (Index i = 0; i < x.size(); ++i) {
      const double inv = 1.0 / static_cast<double>(i + 1);
      g[i] = inv * (1.0 - 2.0 * logistic(x[i] * inv));
    }
    return g;
  };
  return t;
}

TargetModel gaussian_target(const Vec& mean, const Mat& covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size()) {
    throw DimensionError("gaussian_target: covariance shape does not match mean");
  }
  auto llt = std::make_shared<const Eigen::LLT<Mat>>(covariance);
  if (llt->info() != Eigen::Success) {
    throw std::invalid_argument("gaussian_target: covariance is not positive definite");
  }
  TargetModel t;
  t.name = "gaussian";
  t.dim = mean.size();
  t.log_density = [mean, llt](const Vec& x) {
    const Vec z = llt->matrixL().solve(x - mean);
    return -0.5 * z.squaredNorm();
  };
  t.gradient = [mean, llt](const Vec& x) -> Vec { return -llt->solve(x - mean); };
  return t;
}

TargetModel transformed_target(const TargetModel& target, const Metric& metric) {
  require_same_size(target.dim, metric.dim(), "transformed_target");
  TargetModel t;
  t.name = target.name + "*";
  t.dim = target.dim;
  t.log_density = [f = target.log_density, metric](const Vec& xs) {
    return f(metric.from_transformed(xs));
  };
  if (target.has_gradient()) {
    t.gradient = [g = target.gradient, metric](const Vec& xs) -> Vec {
      return metric.transform_gradient(g(metric.from_transformed(xs)));
    };
  }
  return t;
}

double default_fd_step(DiffScheme scheme, double x_i) {
  static const double forward_base = std::sqrt(kEpsMach);
  static const double central_base = std::cbrt(kEpsMach);
  return (scheme == DiffScheme::forward ? forward_base : central_base) * (1.0 + std::abs(x_i));
}

Vec finite_diff_gradient(const ScalarField& f, const Vec& x, DiffScheme scheme,
                         std::optional<double> h, std::optional<double> fx) {
  const Index d = x.size();
  Vec g(d);
  Vec probe = x;
  double f0 = 0.0;
  if (scheme == DiffScheme::forward) f0 = fx ? *fx : checked_eval(f, x);
  if (!std::isfinite(f0)) throw FiniteDifferenceError("finite difference base point outside support");
  for (Index i = 0; i < d; ++i) {
    const double step = h ? *h : default_fd_step(scheme, x[i]);
    // exactly representable step
    const volatile double xp = x[i] + step;
    const double hp = xp - x[i];
    if (scheme == DiffScheme::forward) {
      probe[i] = xp;
      g[i] = (checked_eval(f, probe) - f0) / hp;
    } else {
      probe[i] = x[i] + hp;
      const double up = checked_eval(f, probe);
      probe[i] = x[i] - hp;
      const double down = checked_eval(f, probe);
      g[i] = (up - down) / (2.0 * hp);
    }
    probe[i] = x[i];
  }
  return g;
}

double directional_derivative(const ScalarField& f, const Vec& x, const Vec& zeta,
                              DiffScheme scheme, std::optional<double> h,
                              std::optional<double> fx) {
  require_same_size(x.size(), zeta.size(), "directional_derivative");
  const double step = h ? *h : default_fd_step(scheme, dot(x, zeta));
  if (scheme == DiffScheme::forward) {
    const double f0 = fx ? *fx : checked_eval(f, x);
    if (!std::isfinite(f0)) throw FiniteDifferenceError("finite difference base point outside support");
    return (checked_eval(f, x + step * zeta) - f0) / step;
  }
  const double up = checked_eval(f, x + step * zeta);
  const double down = checked_eval(f, x - step * zeta);
  return (up - down) / (2.0 * step);
}

std::string to_string(GradientMode mode) {
  switch (mode) {
    case GradientMode::analytic: return "analytic";
    case GradientMode::forward_difference: return "forward";
    case GradientMode::central_difference: return "central";
    case GradientMode::surrogate: return "surrogate";
  }
  return "unknown";
}

GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "analytic") return GradientMode::analytic;
  if (s == "forward" || s == "forward-difference") return GradientMode::forward_difference;
  if (s == "central" || s == "central-difference") return GradientMode::central_difference;
  if (s == "surrogate") return GradientMode::surrogate;
  throw std::invalid_argument("unknown gradient mode '" + s + "'");
}

GradientProvider::GradientProvider(const TargetModel& target, GradientMode mode,
                                   std::shared_ptr<const GaussianSurrogate> surrogate)
    : target_(&target), mode_(mode), surrogate_(std::move(surrogate)) {
  if (mode_ == GradientMode::analytic && !target.has_gradient()) {
    throw std::invalid_argument("target '" + target.name + "' has no analytic gradient");
  }
  if (mode_ == GradientMode::surrogate) {
    if (!surrogate_) throw std::invalid_argument("surrogate gradient mode without a surrogate");
    require_same_size(surrogate_->mode.size(), target.dim, "surrogate");
  }
}

Vec GradientProvider::gradient(const Vec& x, double log_pi_x, std::uint64_t& evaluations) const {
  switch (mode_) {
    case GradientMode::analytic: return target_->gradient(x);
    case GradientMode::surrogate: return surrogate_->gradient(x);
    case GradientMode::forward_difference:
      evaluations += gradient_cost();
      return finite_diff_gradient(target_->log_density, x, DiffScheme::forward, std::nullopt,
                                  log_pi_x);
    case GradientMode::central_difference:
      evaluations += gradient_cost();
      return finite_diff_gradient(target_->log_density, x, DiffScheme::central);
  }
  throw std::logic_error("unreachable gradient mode");
}

double GradientProvider::directional(const Vec& x, const Vec& w, double log_pi_x,
                                     std::uint64_t& evaluations) const {
  switch (mode_) {
    case GradientMode::analytic: return dot(w, target_->gradient(x));
    case GradientMode::surrogate: return dot(w, surrogate_->gradient(x));
    case GradientMode::forward_difference:
    case GradientMode::central_difference: {
      const double nw = norm(w);
      if (!(nw > 0.0)) throw DegenerateDirection("directional derivative along zero vector");
      evaluations += directional_cost();
      const auto scheme = mode_ == GradientMode::forward_difference ? DiffScheme::forward
                                                                    : DiffScheme::central;
      return nw * directional_derivative(target_->log_density, x, Vec(w / nw), scheme,
                                         std::nullopt, log_pi_x);
    }
  }
  throw std::logic_error("unreachable gradient mode");
}

Vec GradientProvider::directional(const Vec& x, const Mat& directions, double log_pi_x,
                                  std::uint64_t& evaluations) const {
  if (mode_ == GradientMode::analytic || mode_ == GradientMode::surrogate) {
    const Vec g = mode_ == GradientMode::analytic ? target_->gradient(x) : surrogate_->gradient(x);
    Vec out(directions.cols());
    for (Index i = 0; i < directions.cols(); ++i) out[i] = dot(directions.col(i), g);
    return out;
  }
  Vec out(directions.cols());
  for (Index i = 0; i < directions.cols(); ++i) {
    out[i] = directional(x, Vec(directions.col(i)), log_pi_x, evaluations);
  }
  return out;
}

std::uint64_t GradientProvider::gradient_cost() const {
  const auto d = static_cast<std::uint64_t>(target_->dim);
  switch (mode_) {
    case GradientMode::forward_difference: return d;
    case GradientMode::central_difference: return 2 * d;
    default: return 0;
  }
}

std::uint64_t GradientProvider::directional_cost() const {
  switch (mode_) {
    case GradientMode::forward_difference: return 1;
    case GradientMode::central_difference: return 2;
    default: return 0;
  }
}

}  // namespace dbps
