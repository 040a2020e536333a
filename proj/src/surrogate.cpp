#include "dbps/surrogate.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace dbps {

NelderMeadResult nelder_mead_minimize(const std::function<double(const Vec&)>& f,
                                      const Vec& x0, const NelderMeadOptions& options) {
  const Index n = x0.size();
  if (n < 1) throw DimensionError("nelder_mead_minimize: empty start point");
  constexpr double kReflect = 1.0, kExpand = 2.0, kContract = 0.5, kShrink = 0.5;

  std::vector<Vec> simplex(n + 1, x0);
  std::vector<double> values(n + 1);
  for (Index i = 0; i < n; ++i) simplex[i + 1][i] += options.initial_step;
  for (Index i = 0; i <= n; ++i) values[i] = f(simplex[i]);

  std::vector<Index> order(n + 1);
  NelderMeadResult result;
  int iter = 0;
  for (;; ++iter) {
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return values[a] < values[b]; });
    const Index best = order.front(), worst = order.back(), second = order[n - 1];
    if (values[worst] - values[best] < options.f_tolerance) {
      result.converged = true;
      break;
    }
    if (iter >= options.max_iterations) break;

    Vec centroid = Vec::Zero(n);
    for (Index i = 0; i < n; ++i) centroid += simplex[order[i]];
    centroid /= static_cast<double>(n);

    const Vec xr = centroid + kReflect * (centroid - simplex[worst]);
    const double fr = f(xr);
    if (fr < values[best]) {
      const Vec xe = centroid + kExpand * (xr - centroid);
      const double fe = f(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        values[worst] = fe;
      } else {
        simplex[worst] = xr;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = xr;
      values[worst] = fr;
      continue;
    }
    bool accepted = false;
    if (fr < values[worst]) {
      const Vec xc = centroid + kContract * (xr - centroid);
      const double fc = f(xc);
      if (fc <= fr) {
        simplex[worst] = xc;
        values[worst] = fc;
        accepted = true;
      }
    } else {
      const Vec xc = centroid + kContract * (simplex[worst] - centroid);
      const double fc = f(xc);
      if (fc < values[worst]) {
        simplex[worst] = xc;
        values[worst] = fc;
        accepted = true;
      }
    }
    if (!accepted) {
      for (Index i = 0; i <= n; ++i) {
        if (i == best) continue;
        simplex[i] = simplex[best] + kShrink * (simplex[i] - simplex[best]);
        values[i] = f(simplex[i]);
      }
    }
  }
  const Index best = order.front();
  result.x = simplex[best];
  result.value = values[best];
  result.iterations = iter;
  return result;
}

Mat finite_diff_hessian(const std::function<double(const Vec&)>& f, const Vec& x) {
  const Index d = x.size();
  const double base = std::pow(std::numeric_limits<double>::epsilon(), 0.25);
  Vec h(d);
  for (Index i = 0; i < d; ++i) {
    const volatile double xp = x[i] + base * (1.0 + std::abs(x[i]));
    h[i] = xp - x[i];
  }
  const double f0 = f(x);
  Mat hess(d, d);
  Vec p = x;
  for (Index i = 0; i < d; ++i) {
    p[i] = x[i] + h[i];
    const double up = f(p);
    p[i] = x[i] - h[i];
    const double down = f(p);
    p[i] = x[i];
    hess(i, i) = (up - 2.0 * f0 + down) / (h[i] * h[i]);
    for (Index j = 0; j < i; ++j) {
      auto at = [&](double si, double sj) {
        p[i] = x[i] + si * h[i];
        p[j] = x[j] + sj * h[j];
        const double v = f(p);
        p[i] = x[i];
        p[j] = x[j];
        return v;
      };
      const double v = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * h[i] * h[j]);
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

Mat regularize_spd(const Mat& h, double zero_tolerance, bool* floored, double* condition_number) {
  const Mat sym = 0.5 * (h + h.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  Vec values = eig.eigenvalues();
  for (Index i = 0; i < values.size(); ++i) {
    if (std::abs(values[i]) < zero_tolerance) values[i] = 0.0;
  }
  const double largest = values.maxCoeff();
  const double floor = 1e-6 * (largest > 0.0 ? largest : 1.0);
  bool any_floored = false;
  for (Index i = 0; i < values.size(); ++i) {
    if (values[i] < floor) {
      values[i] = floor;
      any_floored = true;
    }
  }
  if (floored) *floored = any_floored;
  if (condition_number) *condition_number = values.maxCoeff() / values.minCoeff();
  const Mat& v = eig.eigenvectors();
  Mat out = v * values.asDiagonal() * v.transpose();
  return 0.5 * (out + out.transpose());
}

GaussianSurrogate fit_gaussian_surrogate(const TargetModel& target, const Vec& x0,
                                         const NelderMeadOptions& options) {
  require_same_size(x0.size(), target.dim, "fit_gaussian_surrogate");
  const auto& log_pi = target.log_density;
  auto objective = [&](const Vec& x) {
    const double v = log_pi(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : -v;
  };
  const double start_value = objective(x0);
  NelderMeadResult nm = nelder_mead_minimize(objective, x0, options);
  GaussianSurrogate s;
  if (!nm.converged) {
    // one restart from the best vertex before giving up
    const NelderMeadResult again = nelder_mead_minimize(objective, nm.x, options);
    if (again.value <= nm.value) {
      const int total = nm.iterations + again.iterations;
      nm = again;
      nm.iterations = total;
    }
  }
  if (!nm.converged && !(nm.value < start_value)) {
    throw SurrogateFitError("Nelder-Mead made no improvement within the iteration cap");
  }
  if (!std::isfinite(nm.value)) throw SurrogateFitError("mode search ended outside the support");
  if (!nm.converged) {
    s.warnings.push_back("Nelder-Mead reached the iteration cap before converging");
  }
  s.mode = nm.x;
  s.optimizer_iterations = nm.iterations;

  const Mat raw = -finite_diff_hessian(log_pi, s.mode);
  const double zero_tol =
      2.0 * std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(nm.value));
  s.hessian = regularize_spd(raw, zero_tol, &s.regularized, &s.condition_number);
  if (s.regularized) {
    std::ostringstream msg;
    msg << "Hessian at the mode is not positive definite; eigenvalues floored (condition "
           "number "
        << s.condition_number << ")";
    s.warnings.push_back(msg.str());
  }
  return s;
}

}  // namespace dbps
