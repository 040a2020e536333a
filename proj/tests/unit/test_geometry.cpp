#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <random>

#include "dbps/geometry.hpp"

using namespace dbps;

namespace {

Vec random_vec(Index d, Rng& rng) {
  std::normal_distribution<double> n;
  Vec v(d);
  for (Index i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

Mat random_spd(Index d, Rng& rng) {
  Mat a(d, d);
  std::normal_distribution<double> n;
  for (Index i = 0; i < d; ++i)
    for (Index j = 0; j < d; ++j) a(i, j) = n(rng);
  return a * a.transpose() + Mat::Identity(d, d) * 0.5;
}

double max_abs(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("reflect examples") {
  Vec u(2), v(2);
  u << 1, 0;
  v << 0, 1;
  CHECK(max_abs(reflect(u, v) - Vec(Eigen::Vector2d(-1, 0))) == 0.0);
  u << 0, 1;
  v << 0, 2;
  CHECK(max_abs(reflect(u, v) - u) < 1e-15);
  u << 0.6, 0.8;
  v << 1, 0;
  CHECK(max_abs(reflect(u, v) - Vec(Eigen::Vector2d(0.6, -0.8))) < 1e-15);
  CHECK_THROWS_AS(reflect(u, Vec(Vec::Zero(2))), DegenerateDirection);
  CHECK_THROWS_AS(reflect(u, Vec(Vec::Ones(3))), DimensionError);
}

TEST_CASE("reflect_precond examples") {
  Rng rng(3);
  Vec u(2), v(2);
  u << 1, 0;
  v << 1, 0;
  Mat g(2, 2);
  g << 4, 0, 0, 1;
  const Metric m = Metric::from_gamma(g);
  CHECK(max_abs(reflect_precond(u, v, m) - u) < 1e-15);

  const Metric id = Metric::identity(5);
  for (int k = 0; k < 20; ++k) {
    const Vec a = random_vec(5, rng);
    const Vec b = random_vec(5, rng);
    CHECK(max_abs(reflect_precond(a, b, id) - reflect(a, b)) == 0.0);
  }
}

TEST_CASE("reflect_precond equals the transformed-space reflection") {
  Rng rng(11);
  for (Index d : {2, 5, 10}) {
    const Metric m = Metric::from_gamma(random_spd(d, rng));
    for (int k = 0; k < 50; ++k) {
      const Vec u = random_vec(d, rng);
      const Vec v = random_vec(d, rng);
      const Vec direct = reflect_precond(u, v, m);
      const Vec via = m.from_transformed(reflect(m.to_transformed(u), m.transform_gradient(v)));
      CHECK(max_abs(direct - via) < 1e-9 * (1.0 + max_abs(direct)));
    }
  }
}

TEST_CASE("involutions and conservation across dimensions") {
  Rng rng(2024);
  for (Index d : {1, 2, 3, 10, 25, 100}) {
    CAPTURE(d);
    for (int k = 0; k < 1000; ++k) {
      const Vec u = sample_unit_sphere<double>(d, rng);
      const Vec v = random_vec(d, rng);
      const Vec r = reflect(u, v);
      CHECK(max_abs(reflect(r, v) - u) <= 1e-10);
      CHECK(std::abs(norm(r) - 1.0) <= 1e-10);
      CHECK(std::abs(dot(r, v) - dot(u, v)) <= 1e-10 * norm(v));
    }
    const Metric m = Metric::from_gamma(random_spd(d, rng));
    for (int k = 0; k < 1000; ++k) {
      const Vec u = m.from_transformed(sample_unit_sphere<double>(d, rng));
      const Vec v = random_vec(d, rng);
      const Vec r = reflect_precond(u, v, m);
      CHECK(max_abs(reflect_precond(r, v, m) - u) <= 1e-10 * (1.0 + max_abs(u)));
      CHECK(std::abs(norm(m.to_transformed(r)) - 1.0) <= 1e-10);
      CHECK(std::abs(dot(r, v) - dot(u, v)) <= 1e-10 * (1.0 + std::abs(dot(u, v))));
    }
    if (d < 2) continue;
    for (int k = 0; k < 1000; ++k) {
      const Vec u = sample_unit_sphere<double>(d, rng);
      const Vec g = random_vec(d, rng);
      const Vec z = sample_unit_sphere<double>(d, rng);
      Vec v;
      try {
        v = subset_reflect(u, g, z);
      } catch (const DegenerateConfiguration&) {
        continue;
      }
      const double ng = norm(g);
      CHECK(std::abs(norm(v) - 1.0) <= 1e-10);
      CHECK(std::abs(dot(v, g) - dot(u, g)) / ng <= 1e-10);
      CHECK(max_abs(subset_reflect(v, g, z) - u) <= 1e-10);
    }
  }
}

TEST_CASE("sample_unit_sphere") {
  Rng rng(5);
  int plus = 0;
  for (int k = 0; k < 2000; ++k) {
    const Vec u = sample_unit_sphere<double>(1, rng);
    CHECK(std::abs(u[0]) == 1.0);
    plus += u[0] > 0;
  }
  CHECK(std::abs(plus - 1000) < 4 * std::sqrt(500.0));

  const int n = 100000;
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  Eigen::Vector3d sq = Eigen::Vector3d::Zero();
  for (int k = 0; k < n; ++k) {
    const Vec u = sample_unit_sphere<double>(3, rng);
    CHECK(std::abs(norm(u) - 1.0) <= 1e-14);
    sum += u;
    sq += u.cwiseProduct(u);
  }
  for (int i = 0; i < 3; ++i) {
    const double mean = sum[i] / n;
    const double var = sq[i] / n - mean * mean;
    CHECK(std::abs(mean) < 4.0 * std::sqrt((1.0 / 3.0) / n));
    CHECK(std::abs(var - 1.0 / 3.0) < 0.05 / 3.0);
  }
}

TEST_CASE("sample_orthogonal_unit") {
  Rng rng(9);
  Vec u(2);
  u << 1, 0;
  for (int k = 0; k < 100; ++k) {
    const Vec z = sample_orthogonal_unit(u, rng);
    CHECK(std::abs(z[0]) < 1e-15);
    CHECK(std::abs(std::abs(z[1]) - 1.0) < 1e-15);
  }
  CHECK_THROWS_AS(sample_orthogonal_unit(Vec(Vec::Ones(1)), rng), DimensionError);

  const Index d = 25;
  const Vec w = sample_unit_sphere<double>(d, rng);
  const int n = 100000;
  Mat cov = Mat::Zero(d, d);
  for (int k = 0; k < n; ++k) {
    const Vec z = sample_orthogonal_unit(w, rng);
    CHECK(std::abs(dot(z, w)) <= 1e-12);
    CHECK(std::abs(norm(z) - 1.0) <= 1e-12);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(z);
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= n;
  const Mat expected = (Mat::Identity(d, d) - w * w.transpose()) / static_cast<double>(d - 1);
  // diagonal within 5%; off-diagonal entries within 5% of the diagonal scale
  const double scale = 1.0 / static_cast<double>(d - 1);
  for (Index i = 0; i < d; ++i) {
    CHECK(std::abs(cov(i, i) - expected(i, i)) < 0.05 * expected(i, i));
    for (Index j = 0; j < i; ++j) CHECK(std::abs(cov(i, j) - expected(i, j)) < 0.05 * scale);
  }
}

TEST_CASE("sample_orthonormal_frame") {
  Rng rng(12);
  const Vec u = sample_unit_sphere<double>(10, rng);
  const Mat f = sample_orthonormal_frame(u, 6, rng);
  CHECK(max_abs(f.col(0) - u) == 0.0);
  CHECK((f.transpose() * f - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("perturb_bounce") {
  Rng rng(21);
  for (Index d : {3, 5, 25}) {
    for (int k = 0; k < 200; ++k) {
      const Vec u = sample_unit_sphere<double>(d, rng);
      const Vec v = random_vec(d, rng);
      const Vec vhat = v / norm(v);
      CHECK(max_abs(perturb_bounce(u, v, 0.0, rng) - u) == 0.0);
      const double eps = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      const Vec r = perturb_bounce(u, v, eps, rng);
      CHECK(std::abs(norm(r) - 1.0) <= 1e-12);
      CHECK(std::abs(dot(r, vhat) - dot(u, vhat)) <= 1e-12);
      // the orthogonal part turns by exactly the prescribed angle
      const Vec up = u - dot(u, vhat) * vhat;
      const Vec rp = r - dot(r, vhat) * vhat;
      CHECK(std::abs(dot(up, rp) - std::sqrt(1.0 - eps * eps) * dot(up, up)) <= 1e-12);
    }
  }
  Vec u2(2), v2(2);
  u2 << 0.6, 0.8;
  v2 << 1, 0;
  CHECK(max_abs(perturb_bounce(u2, v2, 0.5, rng) - u2) == 0.0);
  CHECK_THROWS_AS(perturb_bounce(u2, v2, 1.5, rng), std::invalid_argument);
}

TEST_CASE("perturb_velocity") {
  Rng rng(33);
  for (Index d : {2, 3, 25}) {
    for (int k = 0; k < 200; ++k) {
      const Vec u = sample_unit_sphere<double>(d, rng);
      CHECK(max_abs(perturb_velocity(u, 0.0, 0.7, rng) - u) == 0.0);
      const double kappa = 0.05 + k * 0.01;
      const double delta = 0.3 + 0.001 * k;
      const Vec r = perturb_velocity(u, kappa, delta, rng);
      CHECK(std::abs(norm(r) - 1.0) <= 1e-12);
      CHECK(std::abs(dot(r, u) - 1.0 / std::sqrt(1.0 + kappa * delta)) <= 1e-12);
    }
  }
  const Vec one = Vec::Ones(1);
  CHECK(max_abs(perturb_velocity(one, 0.5, 1.0, rng) - one) == 0.0);
}

TEST_CASE("subset_reflect special directions") {
  Rng rng(44);
  for (int k = 0; k < 100; ++k) {
    const Vec u = sample_unit_sphere<double>(7, rng);
    const Vec g = random_vec(7, rng);
    const Vec ghat = g / norm(g);
    CHECK(max_abs(subset_reflect(u, g, Vec(-ghat)) - reflect(u, g)) < 1e-10);
    // with zeta = +g^ the coefficients are a = b = 1/(2<u,g^>), which again
    // gives R(u,g); -R(u,g) would break <v',g> = <u,g>
    const Vec plus = subset_reflect(u, g, ghat);
    CHECK(max_abs(plus - reflect(u, g)) < 1e-10);
    CHECK(std::abs(dot(Vec(-reflect(u, g)), g) - dot(u, g)) > 1e-6 * norm(g) * std::abs(dot(u, ghat)));
  }
  Vec u(3), g(3);
  u << 1, 0, 0;
  g << 0, 1, 0;
  CHECK_THROWS_AS(subset_reflect(u, g, Vec(Vec::Unit(3, 2))), DegenerateConfiguration);
}

TEST_CASE("combine_directions") {
  Rng rng(55);
  const Index d = 8;
  const Vec g = random_vec(d, rng);
  const Mat basis = sample_orthonormal_frame(sample_unit_sphere<double>(d, rng), d, rng);
  CHECK(max_abs(combine_directions(basis, g) + g / norm(g)) < 1e-12);

  const Vec u = sample_unit_sphere<double>(d, rng);
  Mat single(d, 1);
  single.col(0) = u;
  const double s = dot(u, g) > 0 ? 1.0 : -1.0;
  CHECK(max_abs(combine_directions(single, g) + s * u) < 1e-12);

  for (int k = 0; k < 100; ++k) {
    const Mat f = sample_orthonormal_frame(sample_unit_sphere<double>(d, rng), 3, rng);
    const Vec z = combine_directions(f, g);
    const Vec ghat = g / norm(g);
    CHECK(dot(z, ghat) <= 0.0);
    CHECK(std::abs(norm(z) - 1.0) < 1e-12);
    CHECK(std::abs(dot(z, ghat) + norm(Vec(f.transpose() * ghat))) < 1e-10);
    CHECK(max_abs(combine_directions(f, Vec(3.7 * g)) - z) < 1e-12);
  }
  Mat bad = Mat::Zero(d, 2);
  bad(0, 0) = 1;
  bad(0, 1) = 1;
  CHECK_THROWS_AS(combine_directions(bad, g), std::invalid_argument);
  Mat perp(d, 1);
  perp.col(0) = Vec::Unit(d, 0);
  CHECK_THROWS_AS(combine_directions(perp, Vec(Vec::Unit(d, 1))), DegenerateDirection);
}

TEST_CASE("metric construction") {
  Rng rng(66);
  const Mat g = random_spd(6, rng);
  const Metric m = Metric::from_gamma(g);
  CHECK((m.factor().transpose() * m.factor() - g).cwiseAbs().maxCoeff() <= 1e-10 * g.cwiseAbs().maxCoeff());
  CHECK((m.factor() * m.inverse_factor() - Mat::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(Metric::identity(4).is_identity());
  Mat bad = Mat::Identity(2, 2);
  bad(0, 0) = -1;
  CHECK_THROWS_AS(Metric::from_gamma(bad), std::invalid_argument);
  Mat asym = Mat::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(Metric::from_gamma(asym), std::invalid_argument);
  Vec sc(3);
  sc << 1, 2, 4;
  const Metric s = Metric::from_scales(sc);
  CHECK(std::abs(s.gamma()(2, 2) - 1.0 / 16.0) < 1e-15);
}

TEST_CASE("pairwise dot matches long double reference") {
  Rng rng(77);
  const Vec a = random_vec(1000, rng);
  const Vec b = random_vec(1000, rng);
  long double ref = 0;
  for (Index i = 0; i < 1000; ++i) ref += static_cast<long double>(a[i]) * b[i];
  CHECK(std::abs(dot(a, b) - static_cast<double>(ref)) < 1e-12);
}
