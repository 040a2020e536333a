#pragma once

// Dense-vector primitives for the sampler: reflections, bounce and velocity
// perturbations, and sphere sampling. All functions are pure apart from the
// explicitly passed random stream.

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/Core>

#include <cmath>
#include <random>
#include <string>

#include "dbps/types.hpp"

namespace dbps {

/// Below this norm a gradient is treated as zero and no bounce is attempted.
inline constexpr double kTolGrad = 1e-12;
/// Threshold on the inner products and denominators of subset_reflect.
inline constexpr double kTolDot = 1e-10;
/// Vectors longer than this use pairwise summation for inner products.
inline constexpr Index kPairwiseThreshold = 64;

namespace detail {

template <typename A, typename B>
typename A::Scalar pairwise_dot(const A& a, const B& b, Index begin, Index end) {
  using Scalar = typename A::Scalar;
  if (end - begin <= 32) {
    Scalar s(0);
    for (Index i = begin; i < end; ++i) s += a.coeff(i) * b.coeff(i);
    return s;
  }
  const Index mid = begin + (end - begin) / 2;
  return pairwise_dot(a, b, begin, mid) + pairwise_dot(a, b, mid, end);
}

}  // namespace detail

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar dot(const Eigen::MatrixBase<DerivedA>& a,
                              const Eigen::MatrixBase<DerivedB>& b) {
  require_same_size(a.size(), b.size(), "dot");
  if (a.size() <= kPairwiseThreshold) return a.dot(b);
  const auto& ae = a.derived();
  const auto& be = b.derived();
  return detail::pairwise_dot(ae, be, 0, a.size());
}

template <typename Derived>
typename Derived::Scalar squared_norm(const Eigen::MatrixBase<Derived>& a) {
  return dot(a, a);
}

template <typename Derived>
typename Derived::Scalar norm(const Eigen::MatrixBase<Derived>& a) {
  using std::sqrt;
  return sqrt(dot(a, a));
}

/// Symmetric positive-definite metric Gamma = M^T M together with the factor M
/// and its inverse. Velocities under this metric satisfy |M u| = 1.
template <typename Scalar>
class BasicMetric {
 public:
  using MatrixType = Matrix<Scalar>;
  using VectorType = Vector<Scalar>;

  BasicMetric() = default;

  static BasicMetric identity(Index d) {
    BasicMetric m;
    m.gamma_ = MatrixType::Identity(d, d);
    m.factor_ = m.gamma_;
    m.inverse_factor_ = m.gamma_;
    m.identity_ = true;
    return m;
  }

  /// Factorizes gamma by Cholesky; M is the transposed lower factor.
  static BasicMetric from_gamma(const MatrixType& gamma) {
    if (gamma.rows() != gamma.cols() || gamma.rows() == 0) {
      throw DimensionError("metric: gamma must be square and non-empty");
    }
    const Scalar scale = gamma.cwiseAbs().maxCoeff();
    if ((gamma - gamma.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-12) * scale) {
      throw std::invalid_argument("metric: gamma is not symmetric");
    }
    Eigen::LLT<MatrixType> llt(gamma);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("metric: gamma is not positive definite");
    }
    MatrixType factor = llt.matrixU();
    return from_parts(gamma, std::move(factor));
  }

  /// Builds the metric from an invertible factor M, with Gamma = M^T M.
  static BasicMetric from_factor(const MatrixType& factor) {
    if (factor.rows() != factor.cols() || factor.rows() == 0) {
      throw DimensionError("metric: factor must be square and non-empty");
    }
    MatrixType gamma = factor.transpose() * factor;
    return from_parts(std::move(gamma), factor);
  }

  /// Diagonal metric Gamma = diag(1/scale_i^2), i.e. M = diag(1/scale_i).
  static BasicMetric from_scales(const VectorType& scales) {
    if ((scales.array() <= Scalar(0)).any()) {
      throw std::invalid_argument("metric: scales must be positive");
    }
    MatrixType factor = scales.cwiseInverse().asDiagonal();
    return from_factor(factor);
  }

  Index dim() const { return gamma_.rows(); }
  bool is_identity() const { return identity_; }
  const MatrixType& gamma() const { return gamma_; }
  const MatrixType& factor() const { return factor_; }
  const MatrixType& inverse_factor() const { return inverse_factor_; }

  /// u* = M u
  template <typename Derived>
  VectorType to_transformed(const Eigen::MatrixBase<Derived>& u) const {
    return factor_ * u;
  }
  /// u = M^{-1} u*
  template <typename Derived>
  VectorType from_transformed(const Eigen::MatrixBase<Derived>& u_star) const {
    return inverse_factor_ * u_star;
  }
  /// Gradient of x* -> f(M^{-1} x*) given the gradient g of f: M^{-T} g.
  template <typename Derived>
  VectorType transform_gradient(const Eigen::MatrixBase<Derived>& g) const {
    return inverse_factor_.transpose() * g;
  }

 private:
  static BasicMetric from_parts(MatrixType gamma, MatrixType factor) {
    BasicMetric m;
    const Index d = gamma.rows();
    Eigen::FullPivLU<MatrixType> lu(factor);
    if (!lu.isInvertible()) throw std::invalid_argument("metric: factor is singular");
    m.inverse_factor_ = lu.solve(MatrixType::Identity(d, d));
    const Scalar scale = gamma.cwiseAbs().maxCoeff();
    const Scalar err = (factor.transpose() * factor - gamma).cwiseAbs().maxCoeff();
    if (err > Scalar(1e-10) * scale) {
      throw std::invalid_argument("metric: factorization residual too large");
    }
    m.gamma_ = std::move(gamma);
    m.factor_ = std::move(factor);
    m.identity_ = m.gamma_.isIdentity(Scalar(0));
    return m;
  }

  MatrixType gamma_;
  MatrixType factor_;
  MatrixType inverse_factor_;
  bool identity_ = false;
};

using Metric = BasicMetric<double>;

/// R(u, v) = -u + 2 <u, v^> v^, the reflection of u in the hyperplane
/// orthogonal to v.
template <typename DerivedU, typename DerivedV>
Vector<typename DerivedU::Scalar> reflect(const Eigen::MatrixBase<DerivedU>& u,
                                          const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  require_same_size(u.size(), v.size(), "reflect");
  const Scalar vv = squared_norm(v);
  if (!(std::sqrt(vv) > Scalar(kTolGrad))) {
    throw DegenerateDirection("reflect: direction vector has vanishing norm");
  }
  const Scalar c = Scalar(2) * dot(u, v) / vv;
  return -u + c * v;
}

/// Reflection under a metric. Writing w = M^{-T} v, the result is
/// -u + 2 <u,v> / |w|^2 * M^{-1} w. It keeps <u,v> and u^T Gamma u, and is
/// exactly the plain reflection of M u in M^{-T} v mapped back by M^{-1}.
template <typename DerivedU, typename DerivedV>
Vector<typename DerivedU::Scalar> reflect_precond(
    const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v,
    const BasicMetric<typename DerivedU::Scalar>& metric) {
  using Scalar = typename DerivedU::Scalar;
  require_same_size(u.size(), v.size(), "reflect_precond");
  require_same_size(u.size(), metric.dim(), "reflect_precond");
  if (!(norm(v) > Scalar(kTolGrad))) {
    throw DegenerateDirection("reflect_precond: direction vector has vanishing norm");
  }
  if (metric.is_identity()) return reflect(u, v);
  const Vector<Scalar> w = metric.transform_gradient(v);
  const Scalar ww = squared_norm(w);
  const Scalar c = Scalar(2) * dot(u, v) / ww;
  return -u + c * metric.from_transformed(w);
}

/// Uniform draw from the unit sphere in R^d.
template <typename Scalar = double, typename Urbg>
Vector<Scalar> sample_unit_sphere(Index d, Urbg& rng) {
  if (d < 1) throw DimensionError("sample_unit_sphere: d must be >= 1");
  std::normal_distribution<Scalar> normal;
  for (;;) {
    Vector<Scalar> z(d);
    for (Index i = 0; i < d; ++i) z[i] = normal(rng);
    const Scalar n = norm(z);
    if (n > Scalar(1e-300)) return z / n;
  }
}

/// Uniform draw from the unit sphere of the orthogonal complement of the
/// unit vector u.
template <typename Derived, typename Urbg>
Vector<typename Derived::Scalar> sample_orthogonal_unit(
    const Eigen::MatrixBase<Derived>& u, Urbg& rng) {
  using Scalar = typename Derived::Scalar;
  const Index d = u.size();
  if (d < 2) throw DimensionError("sample_orthogonal_unit: needs d >= 2");
  std::normal_distribution<Scalar> normal;
  for (;;) {
    Vector<Scalar> z(d);
    for (Index i = 0; i < d; ++i) z[i] = normal(rng);
    // two projection passes keep <z,u> at roundoff level
    z -= dot(z, u) * u;
    z -= dot(z, u) * u;
    const Scalar n = norm(z);
    if (n > Scalar(1e-12)) return z / n;
  }
}

/// Random orthonormal frame whose first column is the unit vector u; the
/// remaining n-1 columns are uniformly oriented in the complement of u.
template <typename Derived, typename Urbg>
Matrix<typename Derived::Scalar> sample_orthonormal_frame(
    const Eigen::MatrixBase<Derived>& u, Index n, Urbg& rng) {
  using Scalar = typename Derived::Scalar;
  const Index d = u.size();
  if (n < 1 || n > d) throw DimensionError("sample_orthonormal_frame: need 1 <= n <= d");
  std::normal_distribution<Scalar> normal;
  Matrix<Scalar> frame(d, n);
  frame.col(0) = u;
  for (Index j = 1; j < n; ++j) {
    for (;;) {
      Vector<Scalar> z(d);
      for (Index i = 0; i < d; ++i) z[i] = normal(rng);
      for (int pass = 0; pass < 2; ++pass) {
        for (Index k = 0; k < j; ++k) z -= dot(z, frame.col(k)) * frame.col(k);
      }
      const Scalar nz = norm(z);
      if (nz > Scalar(1e-12)) {
        frame.col(j) = z / nz;
        break;
      }
    }
  }
  return frame;
}

/// Perturbed bounce: rotates the part of u_refl orthogonal to v by an angle
/// set by eps towards a random direction zeta orthogonal to both v and that
/// part. The component along v^ and the norm are untouched.
template <typename DerivedU, typename DerivedV, typename Urbg>
Vector<typename DerivedU::Scalar> perturb_bounce(const Eigen::MatrixBase<DerivedU>& u_refl,
                                                 const Eigen::MatrixBase<DerivedV>& v,
                                                 typename DerivedU::Scalar eps, Urbg& rng) {
  using Scalar = typename DerivedU::Scalar;
  require_same_size(u_refl.size(), v.size(), "perturb_bounce");
  if (eps < Scalar(0) || eps > Scalar(1)) {
    throw std::invalid_argument("perturb_bounce: eps must lie in [0,1]");
  }
  const Index d = u_refl.size();
  if (eps == Scalar(0) || d < 3) return u_refl;
  const Scalar nv = norm(v);
  if (!(nv > Scalar(kTolGrad))) {
    throw DegenerateDirection("perturb_bounce: direction vector has vanishing norm");
  }
  const Vector<Scalar> vhat = v / nv;
  const Scalar along = dot(u_refl, vhat);
  const Vector<Scalar> perp = u_refl - along * vhat;
  const Scalar nperp = norm(perp);
  if (nperp <= Scalar(1e-12)) return u_refl;
  const Vector<Scalar> perp_hat = perp / nperp;

  std::normal_distribution<Scalar> normal;
  Vector<Scalar> zeta(d);
  for (;;) {
    for (Index i = 0; i < d; ++i) zeta[i] = normal(rng);
    for (int pass = 0; pass < 2; ++pass) {
      zeta -= dot(zeta, vhat) * vhat;
      zeta -= dot(zeta, perp_hat) * perp_hat;
    }
    const Scalar nz = norm(zeta);
    if (nz > Scalar(1e-12)) {
      zeta /= nz;
      break;
    }
  }
  using std::sqrt;
  return along * vhat + sqrt(Scalar(1) - eps * eps) * perp + eps * nperp * zeta;
}

/// One step of the discretized spherical Brownian motion:
/// (u + sqrt(kappa delta) zeta) / sqrt(1 + kappa delta), zeta uniform on the
/// unit sphere orthogonal to u. In one dimension there is no orthogonal
/// direction and u is returned unchanged.
template <typename Derived, typename Urbg>
Vector<typename Derived::Scalar> perturb_velocity(const Eigen::MatrixBase<Derived>& u,
                                                  typename Derived::Scalar kappa,
                                                  typename Derived::Scalar delta, Urbg& rng) {
  using Scalar = typename Derived::Scalar;
  if (kappa < Scalar(0)) throw std::invalid_argument("perturb_velocity: kappa must be >= 0");
  if (kappa == Scalar(0) || u.size() < 2) return u;
  using std::sqrt;
  const Scalar kd = kappa * delta;
  const Vector<Scalar> zeta = sample_orthogonal_unit(u, rng);
  return (u + sqrt(kd) * zeta) / sqrt(Scalar(1) + kd);
}

/// Coefficients (a, b) of the partial-gradient reflection a u + b v' = zeta,
/// from the three inner products <u,g^>, <zeta,g^>, <zeta,u>.
template <typename Scalar>
std::pair<Scalar, Scalar> subset_reflect_coefficients(Scalar ug, Scalar zg, Scalar zu) {
  using std::abs;
  if (abs(ug) <= Scalar(kTolDot)) {
    throw DegenerateConfiguration("subset_reflect: <u,g> vanishes");
  }
  const Scalar den = Scalar(2) * ug * (zg - zu * ug);
  if (abs(den) <= Scalar(kTolDot)) {
    throw DegenerateConfiguration("subset_reflect: vanishing denominator for a");
  }
  const Scalar a = (zg * zg - ug * ug) / den;
  const Scalar b = zg / ug - a;
  if (abs(b) <= Scalar(kTolDot)) {
    throw DegenerateConfiguration("subset_reflect: vanishing b");
  }
  return {a, b};
}

/// Reflection that only needs <u,g> and <zeta,g>: returns the unique unit v'
/// with a u + b v' = zeta and <v',g> = <u,g>. Applying it to (v', g, zeta)
/// returns u.
template <typename DerivedU, typename DerivedG, typename DerivedZ>
Vector<typename DerivedU::Scalar> subset_reflect(const Eigen::MatrixBase<DerivedU>& u,
                                                 const Eigen::MatrixBase<DerivedG>& g,
                                                 const Eigen::MatrixBase<DerivedZ>& zeta) {
  using Scalar = typename DerivedU::Scalar;
  require_same_size(u.size(), g.size(), "subset_reflect");
  require_same_size(u.size(), zeta.size(), "subset_reflect");
  const Scalar ng = norm(g);
  if (!(ng > Scalar(kTolGrad))) {
    throw DegenerateDirection("subset_reflect: gradient has vanishing norm");
  }
  const Scalar ug = dot(u, g) / ng;
  const Scalar zg = dot(zeta, g) / ng;
  const Scalar zu = dot(zeta, u);
  subset_reflect_coefficients(ug, zg, zu);  // degeneracy checks
  // v' = zeta/b - (a/b) u is the other unit vector of span(u, zeta) with the
  // same component along g, i.e. the in-plane reflection of u about the
  // projection of g. That form avoids dividing by a small b.
  // Projections use the actual |u| so that rounding in u is not amplified.
  const Scalar uu = dot(u, u);
  const Vector<Scalar> e2 = zeta - (zu / uu) * u;
  const Scalar s2 = dot(e2, e2);
  const Scalar e2g = dot(e2, g) / ng;
  const Vector<Scalar> gp = (ug / uu) * u + (e2g / s2) * e2;
  const Scalar gp2 = ug * ug / uu + e2g * e2g / s2;
  return Scalar(2) * (ug / gp2) * gp - u;
}

/// zeta = -sum c_i zeta_i / sqrt(sum c_i^2) for given coefficients
/// c_i = <zeta_i, g>; the columns of `zetas` are the zeta_i.
template <typename DerivedZ, typename DerivedC>
Vector<typename DerivedZ::Scalar> combine_directions_from_coefficients(
    const Eigen::MatrixBase<DerivedZ>& zetas, const Eigen::MatrixBase<DerivedC>& coeffs) {
  using Scalar = typename DerivedZ::Scalar;
  require_same_size(zetas.cols(), coeffs.size(), "combine_directions");
  const Scalar nc = norm(coeffs);
  if (!(nc > Scalar(kTolDot))) {
    throw DegenerateDirection("combine_directions: all directional derivatives vanish");
  }
  return -(zetas * coeffs) / nc;
}

/// Unit combination of the orthonormal columns of `zetas` with the largest
/// component along -g.
template <typename DerivedZ, typename DerivedG>
Vector<typename DerivedZ::Scalar> combine_directions(const Eigen::MatrixBase<DerivedZ>& zetas,
                                                     const Eigen::MatrixBase<DerivedG>& g) {
  using Scalar = typename DerivedZ::Scalar;
  require_same_size(zetas.rows(), g.size(), "combine_directions");
  const Index n = zetas.cols();
  if (n < 1) throw DimensionError("combine_directions: need at least one direction");
  for (Index i = 0; i < n; ++i) {
    using std::abs;
    if (abs(norm(zetas.col(i)) - Scalar(1)) > Scalar(1e-8)) {
      throw std::invalid_argument("combine_directions: direction " + std::to_string(i) +
                                  " is not unit norm");
    }
    for (Index j = 0; j < i; ++j) {
      if (abs(dot(zetas.col(i), zetas.col(j))) > Scalar(1e-8)) {
        throw std::invalid_argument("combine_directions: directions are not orthogonal");
      }
    }
  }
  const Scalar ng = norm(g);
  if (!(ng > Scalar(kTolGrad))) {
    throw DegenerateDirection("combine_directions: gradient has vanishing norm");
  }
  Vector<Scalar> coeffs(n);
  for (Index i = 0; i < n; ++i) coeffs[i] = dot(zetas.col(i), g) / ng;
  return combine_directions_from_coefficients(zetas, coeffs);
}

}  // namespace dbps
