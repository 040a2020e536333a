#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dbps/targets.hpp"
#include "dbps/types.hpp"

namespace dbps {

struct NelderMeadOptions {
  double initial_step = 0.1;     // simplex edge along each coordinate
  double f_tolerance = 1e-10;    // stop when max f - min f over the simplex falls below
  int max_iterations = 5000;
};

struct NelderMeadResult {
  Vec x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f by the Nelder-Mead simplex method (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2).
NelderMeadResult nelder_mead_minimize(const std::function<double(const Vec&)>& f,
                                      const Vec& x0, const NelderMeadOptions& options = {});

/// Central-difference Hessian of f at x with steps eps_mach^{1/4}(1+|x_i|).
Mat finite_diff_hessian(const std::function<double(const Vec&)>& f, const Vec& x);

class SurrogateFitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Gaussian approximation at the mode; its field V(x) = -H (x - m) replaces the
/// true gradient for reflections.
struct GaussianSurrogate {
  Vec mode;
  Mat hessian;  // negative Hessian of log pi at the mode, regularized to SPD
  double condition_number = 0.0;
  bool regularized = false;
  int optimizer_iterations = 0;
  std::vector<std::string> warnings;

  Vec gradient(const Vec& x) const { return -(hessian * (x - mode)); }
};

/// Regularizes a symmetric matrix to SPD by flooring its eigenvalues at
/// 1e-6 times the largest (or 1e-6 when none is positive). Eigenvalues whose
/// magnitude is below `zero_tolerance` count as zero.
Mat regularize_spd(const Mat& h, double zero_tolerance, bool* floored = nullptr,
                   double* condition_number = nullptr);

GaussianSurrogate fit_gaussian_surrogate(const TargetModel& target, const Vec& x0,
                                         const NelderMeadOptions& options = {});

}  // namespace dbps
