#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dbps/geometry.hpp"
#include "dbps/types.hpp"

namespace dbps {

/// Unnormalized log-density with an optional analytic gradient.
/// log_density may return -infinity outside the support but never +inf/NaN.
struct TargetModel {
  std::string name;
  Index dim = 0;
  std::function<double(const Vec&)> log_density;
  std::function<Vec(const Vec&)> gradient;  // empty when not available

  bool has_gradient() const { return static_cast<bool>(gradient); }
};

/// log pi(x) = -1/4 sum x_i^4 / lambda_i^4
TargetModel quartic_target(const Vec& lambdas);

/// log pi(x) = sum_i [x_i/i - 2 log(1 + exp(x_i/i))]
TargetModel logistic_target(Index d);

/// Multivariate normal; throws std::invalid_argument when covariance is not SPD.
TargetModel gaussian_target(const Vec& mean, const Mat& covariance);

/// pi*(x*) = pi(M^{-1} x*), the target seen in the coordinates x* = M x.
TargetModel transformed_target(const TargetModel& target, const Metric& metric);

enum class DiffScheme { forward, central };

/// Thrown when a finite-difference stencil leaves the support.
class FiniteDifferenceError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

using ScalarField = std::function<double(const Vec&)>;

/// Default step for coordinate (or direction) value x_i:
/// sqrt(eps_mach)(1+|x_i|) forward, cbrt(eps_mach)(1+|x_i|) central.
double default_fd_step(DiffScheme scheme, double x_i);

/// Finite-difference gradient. `h` overrides the default per-coordinate step;
/// `fx` may carry f(x) to save one evaluation for the forward scheme.
Vec finite_diff_gradient(const ScalarField& f, const Vec& x, DiffScheme scheme,
                         std::optional<double> h = std::nullopt,
                         std::optional<double> fx = std::nullopt);

/// Estimate of <zeta, grad f(x)> for a unit vector zeta.
double directional_derivative(const ScalarField& f, const Vec& x, const Vec& zeta,
                              DiffScheme scheme, std::optional<double> h = std::nullopt,
                              std::optional<double> fx = std::nullopt);

enum class GradientMode { analytic, forward_difference, central_difference, surrogate };

std::string to_string(GradientMode mode);
GradientMode gradient_mode_from_string(const std::string& s);

struct GaussianSurrogate;

/// Evaluates the velocity field V used for reflections, counting every
/// log-density call it makes.
class GradientProvider {
 public:
  GradientProvider(const TargetModel& target, GradientMode mode,
                   std::shared_ptr<const GaussianSurrogate> surrogate = nullptr);

  GradientMode mode() const { return mode_; }
  const TargetModel& target() const { return *target_; }

  /// Full field V(x). `log_pi_x` is the already-known log pi(x).
  Vec gradient(const Vec& x, double log_pi_x, std::uint64_t& evaluations) const;

  /// <w, V(x)> for an arbitrary non-zero direction w.
  double directional(const Vec& x, const Vec& w, double log_pi_x,
                     std::uint64_t& evaluations) const;

  /// <w_i, V(x)> for every column w_i of `directions`.
  Vec directional(const Vec& x, const Mat& directions, double log_pi_x,
                  std::uint64_t& evaluations) const;

  /// Log-density evaluations charged for one full gradient.
  std::uint64_t gradient_cost() const;
  /// Log-density evaluations charged for one directional derivative.
  std::uint64_t directional_cost() const;

 private:
  const TargetModel* target_;
  GradientMode mode_;
  std::shared_ptr<const GaussianSurrogate> surrogate_;
};

}  // namespace dbps
