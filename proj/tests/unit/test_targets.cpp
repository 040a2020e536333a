#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "dbps/mmpp.hpp"
#include "dbps/surrogate.hpp"
#include "dbps/targets.hpp"

using namespace dbps;

namespace {

Vec random_vec(Index d, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Vec v(d);
  for (Index i = 0; i < d; ++i) v[i] = n(rng);
  return v;
}

Mat random_spd(Index d, Rng& rng) {
  const Mat a = Mat::NullaryExpr(d, d, [&] { return std::normal_distribution<double>()(rng); });
  return a * a.transpose() + Mat::Identity(d, d);
}

Vec index_lambdas(Index d) {
  Vec l(d);
  for (Index i = 0; i < d; ++i) l[i] = static_cast<double>(i + 1);
  return l;
}

double rel_err(const Vec& a, const Vec& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

// Central differences with an explicit step, written independently of the library.
Vec oracle_central(const TargetModel& t, const Vec& x, double h) {
  Vec g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vec p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (t.log_density(p) - t.log_density(m)) / (2 * h);
  }
  return g;
}

// Uniformization: exp(Bt) = e^{-ct} sum_n (ct)^n/n! P^n with P = I + B/c.
Mat uniformized_exp(const Mat& b, double t) {
  const Index k = b.rows();
  double c = 0.0;
  for (Index i = 0; i < k; ++i) c = std::max(c, -b(i, i));
  c *= 1.01;
  const Mat p = Mat::Identity(k, k) + b / c;
  Mat term = Mat::Identity(k, k);
  Mat sum = Mat::Zero(k, k);
  double weight = std::exp(-c * t);
  for (int n = 0; n < 400; ++n) {
    sum += weight * term;
    term = term * p;
    weight *= c * t / (n + 1);
  }
  return sum;
}

double oracle_mmpp_loglik(const Mat& q, const Vec& lambda, const std::vector<double>& events,
                          double t_end) {
  const Index k = q.rows();
  const Mat b = q - Mat(lambda.asDiagonal());
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(k);
  v[0] = 1.0;
  double prev = 0.0;
  for (double t : events) {
    v = v * uniformized_exp(b, t - prev) * lambda.asDiagonal();
    prev = t;
  }
  v = v * uniformized_exp(b, t_end - prev);
  return std::log(v.sum());
}

}  // namespace

TEST_CASE("quartic target") {
  Vec l(1);
  l << 1;
  const TargetModel t = quartic_target(l);
  Vec x(1);
  x << 2;
  CHECK(t.log_density(x) == doctest::Approx(-4.0));
  CHECK(t.gradient(x)[0] == doctest::Approx(-8.0));
  const TargetModel q = quartic_target(index_lambdas(25));
  CHECK(q.log_density(Vec::Zero(25)) == 0.0);
  CHECK(q.gradient(Vec::Zero(25)).norm() == 0.0);
  CHECK_THROWS(quartic_target(Vec::Zero(2)));
}

TEST_CASE("logistic target") {
  const TargetModel t = logistic_target(25);
  CHECK(t.log_density(Vec::Zero(25)) == doctest::Approx(-50.0 * std::log(2.0)));
  CHECK(t.gradient(Vec::Zero(25)).norm() == 0.0);
  const TargetModel one = logistic_target(1);
  Vec x(1);
  x << 800.0;
  CHECK(std::isfinite(one.log_density(x)));
  CHECK(one.log_density(x) == doctest::Approx(-800.0));
  CHECK(one.gradient(x)[0] == doctest::Approx(-1.0));
  x << -800.0;
  CHECK(one.log_density(x) == doctest::Approx(-800.0));
  CHECK(one.gradient(x)[0] == doctest::Approx(1.0));
}

TEST_CASE("gaussian target") {
  Rng rng(1);
  const Vec mu = random_vec(4, rng);
  const Mat s = random_spd(4, rng);
  const TargetModel t = gaussian_target(mu, s);
  CHECK(t.gradient(mu).norm() < 1e-12);
  const TargetModel id = gaussian_target(Vec::Zero(3), Mat::Identity(3, 3));
  CHECK((id.gradient(Vec::Unit(3, 0)) + Vec::Unit(3, 0)).norm() < 1e-15);
  Mat bad = Mat::Identity(2, 2);
  bad(1, 1) = -1;
  CHECK_THROWS_AS(gaussian_target(Vec::Zero(2), bad), std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(7);
  struct Case {
    TargetModel t;
    double sd;
  };
  std::vector<Case> cases;
  cases.push_back({quartic_target(index_lambdas(25)), 5.0});
  cases.push_back({logistic_target(25), 10.0});
  cases.push_back({gaussian_target(random_vec(6, rng), random_spd(6, rng)), 2.0});
  for (const auto& c : cases) {
    CAPTURE(c.t.name);
    for (int k = 0; k < 100; ++k) {
      const Vec x = random_vec(c.t.dim, rng, c.sd);
      CHECK(rel_err(c.t.gradient(x), oracle_central(c.t, x, 1e-5)) <= 1e-5);
    }
  }
}

TEST_CASE("transformed target") {
  Rng rng(8);
  const TargetModel base = gaussian_target(random_vec(3, rng), random_spd(3, rng));
  const Metric m = Metric::from_gamma(random_spd(3, rng));
  const TargetModel t = transformed_target(base, m);
  const Vec xs = random_vec(3, rng);
  const Vec x = m.inverse_factor() * xs;
  CHECK(t.log_density(xs) == doctest::Approx(base.log_density(x)));
  CHECK(rel_err(t.gradient(xs), oracle_central(t, xs, 1e-5)) < 1e-6);
}

TEST_CASE("finite differences") {
  Rng rng(9);
  const Vec a = random_vec(5, rng);
  const ScalarField lin = [&](const Vec& x) { return 3.0 + a.dot(x); };
  const Mat s = random_spd(5, rng);
  const ScalarField quad = [&](const Vec& x) { return 0.5 * x.dot(s * x); };
  const Vec x = random_vec(5, rng);
  for (auto scheme : {DiffScheme::forward, DiffScheme::central}) {
    CHECK((finite_diff_gradient(lin, x, scheme) - a).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((finite_diff_gradient(lin, x, scheme, 0.5) - a).cwiseAbs().maxCoeff() < 1e-12);
    const Vec z = random_vec(5, rng).normalized();
    CHECK(std::abs(directional_derivative(lin, x, z, scheme, 0.5) - z.dot(a)) < 1e-12);
  }
  // central is exact on a quadratic even with a coarse step; forward carries h/2 S_ii
  const Vec exact = s * x;
  CHECK((finite_diff_gradient(quad, x, DiffScheme::central, 0.1) - exact).cwiseAbs().maxCoeff() < 1e-10);
  const Vec fwd = finite_diff_gradient(quad, x, DiffScheme::forward, 0.1);
  for (Index i = 0; i < 5; ++i) CHECK(fwd[i] - exact[i] == doctest::Approx(0.05 * s(i, i)));

  const ScalarField fq = quartic_target(index_lambdas(25)).log_density;
  const Vec xq = random_vec(25, rng, 5.0);
  const Vec gq = quartic_target(index_lambdas(25)).gradient(xq);
  CHECK(rel_err(finite_diff_gradient(fq, xq, DiffScheme::central, 1e-5), gq) < 1e-6);
  for (int k = 0; k < 10; ++k) {
    const Vec z = random_vec(25, rng).normalized();
    const double dd = directional_derivative(fq, xq, z, DiffScheme::central, 1e-5);
    CHECK(std::abs(dd - z.dot(gq)) <= 1e-6 * gq.norm());
  }
  const Vec full = finite_diff_gradient(fq, xq, DiffScheme::forward);
  for (Index i = 0; i < 25; ++i)
    CHECK(directional_derivative(fq, xq, Vec::Unit(25, i), DiffScheme::forward) ==
          doctest::Approx(full[i]).epsilon(1e-6).scale(1e-3));

  const ScalarField wall = [](const Vec& x) {
    return x[0] > 1.0 ? -std::numeric_limits<double>::infinity() : -x[0] * x[0];
  };
  Vec edge(1);
  edge << 1.0;
  CHECK_THROWS_AS(finite_diff_gradient(wall, edge, DiffScheme::central, 0.01), FiniteDifferenceError);
  CHECK(default_fd_step(DiffScheme::forward, -3.0) == doctest::Approx(4.0 * std::sqrt(2.220446049250313e-16)));
}

TEST_CASE("gradient provider evaluation counts") {
  const TargetModel base = quartic_target(index_lambdas(6));
  std::uint64_t calls = 0;
  TargetModel t = base;
  t.log_density = [&](const Vec& x) {
    ++calls;
    return base.log_density(x);
  };
  Rng rng(10);
  const Vec x = random_vec(6, rng);
  const double lp = base.log_density(x);
  const Mat dirs = Mat::Identity(6, 3);
  for (auto mode : {GradientMode::analytic, GradientMode::forward_difference,
                    GradientMode::central_difference}) {
    GradientProvider p(t, mode);
    std::uint64_t counted = 0;
    calls = 0;
    const Vec g = p.gradient(x, lp, counted);
    CHECK(counted == calls);
    CHECK(counted == p.gradient_cost());
    CHECK(rel_err(g, base.gradient(x)) < 1e-4);
    counted = 0;
    calls = 0;
    const Vec c = p.directional(x, dirs, lp, counted);
    CHECK(counted == calls);
    CHECK(counted == (mode == GradientMode::analytic ? 0u : 3 * p.directional_cost()));
    CHECK(rel_err(c, Vec(base.gradient(x).head(3))) < 1e-4);
  }
  CHECK(GradientProvider(t, GradientMode::forward_difference).gradient_cost() == 6);
  CHECK(GradientProvider(t, GradientMode::central_difference).gradient_cost() == 12);
  CHECK(GradientProvider(t, GradientMode::central_difference).directional_cost() == 2);
  CHECK_THROWS(GradientProvider(t, GradientMode::surrogate));
}

TEST_CASE("matexp") {
  CHECK((matexp(Mat::Zero(3, 3)) - Mat::Identity(3, 3)).norm() == 0.0);
  Vec dg(3);
  dg << -2.0, 0.5, 3.0;
  const Mat e = matexp(Mat(dg.asDiagonal()));
  for (Index i = 0; i < 3; ++i) CHECK(e(i, i) == doctest::Approx(std::exp(dg[i])).epsilon(1e-13));
  Mat n(2, 2);
  n << 0, 1, 0, 0;
  Mat expect(2, 2);
  expect << 1, 1, 0, 1;
  CHECK((matexp(n) - expect).norm() < 1e-15);

  Rng rng(12);
  for (double scale : {0.01, 0.3, 2.0, 20.0}) {
    const Mat a = Mat::NullaryExpr(4, 4, [&] { return std::normal_distribution<double>()(rng); }) * scale;
    // commuting pair: A and a polynomial in A
    const Mat b = 0.5 * a + 0.1 * a * a / std::max(1.0, scale);
    const Mat lhs = matexp(a + b);
    const Mat rhs = matexp(a) * matexp(b);
    CHECK((lhs - rhs).norm() <= 1e-10 * lhs.norm());
  }
  // generator matrices against the uniformization series
  const MmppRates r = reference_mmpp_rates();
  const Mat b = r.q - Mat(r.lambda.asDiagonal());
  for (double t : {0.01, 0.3, 1.7}) {
    const Mat ref = uniformized_exp(b, t);
    CHECK((matexp(b * t) - ref).norm() <= 1e-12 * ref.norm());
  }
}

TEST_CASE("mmpp likelihood, k = 1 closed form") {
  Rng rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    const double lambda = 0.1 + 20.0 * u(rng);
    const double t_end = 0.5 + 30.0 * u(rng);
    const int n = static_cast<int>(60 * u(rng));
    std::vector<double> ev(n);
    for (auto& e : ev) e = t_end * u(rng);
    std::sort(ev.begin(), ev.end());
    MmppRates r{Mat::Zero(1, 1), Vec::Constant(1, lambda)};
    const double ll = mmpp_log_likelihood(r, ev, t_end);
    const double exact = n * std::log(lambda) - lambda * t_end;
    CHECK(std::abs(ll - exact) <= 1e-12 * std::max(1.0, std::abs(exact)));
  }
}

TEST_CASE("mmpp likelihood, k = 2 uniformization oracle") {
  Mat q(2, 2);
  q << -0.7, 0.7, 1.3, -1.3;
  Vec lambda(2);
  lambda << 2.5, 0.4;
  const std::vector<double> ev{0.8, 2.1, 4.4};
  const double ll = mmpp_log_likelihood(MmppRates{q, lambda}, ev, 5.0);
  const double oracle = oracle_mmpp_loglik(q, lambda, ev, 5.0);
  CHECK(std::abs(ll - oracle) <= 1e-8 * std::abs(oracle));

  // no events: a single factor
  const double ll0 = mmpp_log_likelihood(MmppRates{q, lambda}, {}, 3.0);
  const Mat b = q - Mat(lambda.asDiagonal());
  CHECK(ll0 == doctest::Approx(std::log(uniformized_exp(b, 3.0).row(0).sum())).epsilon(1e-10));
}

TEST_CASE("mmpp likelihood, semigroup split and long windows") {
  Rng rng(14);
  const MmppRates r = reference_mmpp_rates();
  const std::vector<double> ev = simulate_mmpp(r, 25.0, rng);
  REQUIRE(ev.size() > 20);
  const double ll = mmpp_log_likelihood(r, ev, 25.0);
  // split every inter-event interval at its midpoint by hand
  const Mat b = r.q - Mat(r.lambda.asDiagonal());
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(4);
  v[0] = 1.0;
  double log_norm = 0.0;
  double prev = 0.0;
  auto push = [&](const Mat& f) {
    v = v * f;
    const double s = v.lpNorm<1>();
    log_norm += std::log(s);
    v /= s;
  };
  for (double t : ev) {
    const double mid = 0.5 * (prev + t);
    push(matexp(b * (mid - prev)));
    push(matexp(b * (t - mid)) * r.lambda.asDiagonal());
    prev = t;
  }
  push(matexp(b * (25.0 - prev)));
  CHECK(std::abs(ll - log_norm) <= 1e-10 * std::max(1.0, std::abs(ll)));

  const std::vector<double> long_ev = simulate_mmpp(r, 250.0, rng);
  CHECK(std::isfinite(mmpp_log_likelihood(r, long_ev, 250.0)));
}

TEST_CASE("mmpp posterior") {
  Rng rng(15);
  MmppModel m;
  m.k = 4;
  m.free_rates = cyclic_pattern(4);
  m.t_end = 25.0;
  m.events = simulate_mmpp(reference_mmpp_rates(), 25.0, rng);
  CHECK(m.dim() == 8);
  const Vec truth = theta_from_rates(m, reference_mmpp_rates());
  CHECK(std::isfinite(mmpp_log_posterior(m, truth)));
  for (int k = 0; k < 10; ++k) {
    const Vec th = random_vec(8, rng);
    CHECK(mmpp_log_posterior(m, th) - mmpp_log_likelihood(m, th) ==
          doctest::Approx(-th.squaredNorm() / 8.0));
  }
  MmppModel empty = m;
  empty.events.clear();
  CHECK(mmpp_log_posterior(empty, Vec::Zero(8)) == mmpp_log_likelihood(empty, Vec::Zero(8)));
  const MmppRates back = rates_from_theta(m, truth);
  CHECK((back.q - reference_mmpp_rates().q).norm() < 1e-12);
  CHECK((back.q.rowwise().sum()).norm() < 1e-12);
}

TEST_CASE("simulate_mmpp") {
  Rng rng(16);
  MmppRates silent{reference_mmpp_rates().q, Vec::Zero(4)};
  CHECK(simulate_mmpp(silent, 100.0, rng).empty());
  MmppRates one{Mat::Zero(1, 1), Vec::Constant(1, 10.0)};
  const auto ev = simulate_mmpp(one, 100.0, rng);
  CHECK(std::abs(static_cast<double>(ev.size()) - 1000.0) < 4.0 * std::sqrt(1000.0));
  CHECK(std::is_sorted(ev.begin(), ev.end()));

  // mean count over replicate datasets against the stationary-law rate
  const MmppRates r = reference_mmpp_rates();
  const Vec p = stationary_distribution(r.q);
  CHECK((p.transpose() * r.q).norm() < 1e-12);
  const double expected = 250.0 * p.dot(r.lambda);
  const int reps = 200;
  double s = 0.0, s2 = 0.0;
  for (int k = 0; k < reps; ++k) {
    const double n = static_cast<double>(simulate_mmpp(r, 250.0, rng).size());
    s += n;
    s2 += n * n;
  }
  const double mean = s / reps;
  const double sd = std::sqrt((s2 / reps - mean * mean) / (reps - 1));
  CHECK(std::abs(mean - expected) < 5.0 * sd);

  Rng a(99), b(99);
  CHECK(simulate_mmpp(r, 20.0, a) == simulate_mmpp(r, 20.0, b));
}

TEST_CASE("mmpp data format") {
  const MmppData d = parse_mmpp_data("t_end=5\n0.5\n1.25\n4\n");
  CHECK(d.t_end == 5.0);
  CHECK(d.events == std::vector<double>{0.5, 1.25, 4.0});
  CHECK_THROWS(parse_mmpp_data("0.5\n1.0\n"));
  CHECK_THROWS(parse_mmpp_data("t_end=5\n2\n1\n"));
  CHECK_THROWS(parse_mmpp_data("t_end=5\n6\n"));
  CHECK_THROWS(parse_mmpp_data("t_end=5\n-1\n"));
  CHECK_THROWS(parse_mmpp_data("t_end=5\nabc\n"));

  const auto path = std::filesystem::temp_directory_path() / "dbps_mmpp_roundtrip.txt";
  Rng rng(17);
  MmppData w{25.0, simulate_mmpp(reference_mmpp_rates(), 25.0, rng)};
  write_mmpp_data(path, w);
  const MmppData back = read_mmpp_data(path);
  CHECK(back.t_end == w.t_end);
  CHECK(back.events == w.events);
  std::filesystem::remove(path);
}

TEST_CASE("nelder-mead and surrogate") {
  const auto rosen = [](const Vec& x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  };
  NelderMeadOptions o;
  o.f_tolerance = 1e-14;
  const auto nm = nelder_mead_minimize(rosen, Vec::Zero(2), o);
  CHECK(nm.converged);
  CHECK((nm.x - Vec::Ones(2)).norm() < 1e-3);

  Rng rng(18);
  const Vec mu = random_vec(4, rng);
  Mat cov = random_spd(4, rng) / 4.0;
  const TargetModel g = gaussian_target(mu, cov);
  const GaussianSurrogate s = fit_gaussian_surrogate(g, Vec::Zero(4));
  CHECK((s.mode - mu).cwiseAbs().maxCoeff() < 1e-4);
  const Mat prec = cov.inverse();
  CHECK((s.hessian - prec).norm() <= 1e-3 * prec.norm());
  CHECK(s.gradient(s.mode).norm() == 0.0);
  CHECK(!s.regularized);
  const Vec w = random_vec(4, rng);
  for (double c : {-2.0, 0.3, 5.0}) {
    const Vec lhs = s.gradient(Vec(s.mode + c * w));
    const Vec rhs = c * s.gradient(Vec(s.mode + w));
    CHECK((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
  }

  const GaussianSurrogate q = fit_gaussian_surrogate(quartic_target(Vec::Ones(3)), Vec::Zero(3));
  CHECK(q.regularized);
  CHECK(!q.warnings.empty());
  CHECK(Eigen::LLT<Mat>(q.hessian).info() == Eigen::Success);
}
