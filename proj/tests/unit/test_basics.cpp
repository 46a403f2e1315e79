#include <doctest.h>

#include <cmath>
#include <set>

#include "fkstab/error.hpp"
#include "fkstab/finite_model.hpp"
#include "fkstab/fit.hpp"
#include "fkstab/gaussian.hpp"
#include "fkstab/random.hpp"
#include "support.hpp"

using namespace fkstab;
using namespace testing_support;

TEST_CASE("random stream replays and separates") {
  RandomStream a(42, 3), b(42, 3), c(42, 4), d(43, 3);
  std::vector<std::uint64_t> xa, xc, xd;
  for (int i = 0; i < 16; ++i) {
    xa.push_back(a());
    CHECK(b() == xa.back());
    xc.push_back(c());
    xd.push_back(d());
  }
  CHECK(xa != xc);
  CHECK(xa != xd);
  CHECK(a.counter() == 16);

  // Substreams ignore the parent's position.
  RandomStream fresh(42, 3);
  auto s1 = a.substream(5, 7, DrawPurpose::mutate);
  auto s2 = fresh.substream(5, 7, DrawPurpose::mutate);
  auto s3 = fresh.substream(5, 7, DrawPurpose::resample);
  const auto v1 = s1(), v2 = s2(), v3 = s3();
  CHECK(v1 == v2);
  CHECK(v1 != v3);
}

TEST_CASE("uniform and normal draws have the right moments") {
  RandomStream rng(7);
  const int m = 200000;
  double su = 0, suu = 0, sn = 0, snn = 0, se = 0;
  for (int i = 0; i < m; ++i) {
    const double u = rng.uniform();
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    su += u;
    suu += u * u;
    const double z = standard_normal(rng);
    sn += z;
    snn += z * z;
    se += standard_exponential(rng);
  }
  CHECK(su / m == doctest::Approx(0.5).epsilon(0.01));
  CHECK(suu / m - (su / m) * (su / m) == doctest::Approx(1.0 / 12).epsilon(0.02));
  CHECK(std::abs(sn / m) < 4.0 / std::sqrt(m));
  CHECK(snn / m == doctest::Approx(1.0).epsilon(0.02));
  CHECK(se / m == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("finite model validation names the offending entry") {
  const Matrix m = two_by_two(0.9, 0.1, 0.2, 0.8);
  SUBCASE("row sum") {
    const Matrix bad = two_by_two(0.9, 0.2, 0.2, 0.8);
    try {
      build_finite_model({bad}, {vec({1, 1})}, vec({0.5, 0.5}));
      FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("row 0 sums to 1.1") != std::string::npos);
    }
  }
  SUBCASE("non-positive potential") {
    CHECK_THROWS_AS(build_finite_model({m}, {vec({1, 0})}, vec({0.5, 0.5})), ValidationError);
  }
  SUBCASE("initial vector") { CHECK_THROWS_AS(build_finite_model({m}, {vec({1, 1})}, vec({0.6, 0.5})), ValidationError); }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(build_finite_model({m}, {vec({1, 1, 1})}, vec({0.5, 0.5})), ValidationError);
  }
  SUBCASE("negative entry") {
    CHECK_THROWS_AS(build_finite_model({two_by_two(1.1, -0.1, 0.2, 0.8)}, {vec({1, 1})}, vec({0.5, 0.5})),
                    ValidationError);
  }
  SUBCASE("lyapunov below one") {
    CHECK_THROWS_AS(build_finite_model({m}, {vec({1, 1})}, vec({0.5, 0.5}), vec({0.5, 2})), ValidationError);
  }
}

TEST_CASE("finite model indexing and horizons") {
  const auto two = two_state_model();
  CHECK(two.size() == 2);
  CHECK(!two.horizon_limit());
  CHECK(two.potential(17)[0] == doctest::Approx(2.0));
  const Matrix q = two.q_matrix(1);
  CHECK(q(0, 0) == doctest::Approx(1.8));
  CHECK(q(0, 1) == doctest::Approx(0.2));
  CHECK(q(1, 0) == doctest::Approx(0.2));
  CHECK(q(1, 1) == doctest::Approx(0.8));

  ModelGen gen(11);
  const auto inh = gen.model(3, 4);
  REQUIRE(inh.horizon_limit());
  CHECK(*inh.horizon_limit() == 4);
  CHECK_NOTHROW(inh.require_horizon(4));
  CHECK_THROWS_AS(inh.require_horizon(5), ValidationError);
}

TEST_CASE("random finite models satisfy the type invariants") {
  RandomStream rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    RandomModelOptions o;
    o.states = 2 + static_cast<std::size_t>(trial % 9);
    o.horizon = 5;
    o.laziness = 0.3;
    const auto m = random_finite_model(rng, o);
    for (std::size_t n = 1; n <= 5; ++n) {
      const Matrix& t = m.transition(n);
      CHECK((t.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
      CHECK(t.minCoeff() >= 0.0);
      CHECK(m.potential(n - 1).minCoeff() > 0.0);
    }
    CHECK(std::abs(m.initial().sum() - 1.0) < 1e-12);
    REQUIRE(m.lyapunov());
    CHECK(m.lyapunov()->minCoeff() >= 1.0);
  }
}

TEST_CASE("gaussian helpers against direct quadrature") {
  CHECK(log_normal_pdf(0.0, 0.0, 1.0) == doctest::Approx(-0.5 * std::log(2 * M_PI)));
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  for (double z : {-3.0, 0.0, 2.0, 10.0, 30.0, 60.0}) {
    const double ref = std::log(0.5 * std::erfc(z / std::sqrt(2.0)));
    if (std::isfinite(ref)) CHECK(log_normal_upper_tail(z) == doctest::Approx(ref).epsilon(1e-10));
  }
  // Far tail: log P(Z > z) ≈ -z²/2 - log(z √(2π)).
  CHECK(log_normal_upper_tail(100.0) == doctest::Approx(-5000.0 - std::log(100.0 * std::sqrt(2 * M_PI))).epsilon(1e-6));
  CHECK(std::exp(log_normal_interval(-1.0, 1.0)) == doctest::Approx(0.682689492137).epsilon(1e-10));

  const std::vector<double> terms{-1000.0, -1001.0, -999.0};
  CHECK(log_sum_exp(terms) == doctest::Approx(-999.0 + std::log(1 + std::exp(-1.0) + std::exp(-2.0))));
  CHECK(std::isinf(log_sum_exp(std::vector<double>{})));

  const double m = 0.7, s = 1.3;
  auto density = [&](double x) { return std::exp(log_normal_pdf(x, m, s * s)); };
  {
    const double ref = midpoint([&](double x) { return density(x) * std::exp(1.0 + 0.8 * std::abs(x)); }, -20, 20);
    CHECK(std::exp(log_gaussian_exp_abs_linear(m, s, 0.8, -INFINITY, INFINITY)) == doctest::Approx(ref).epsilon(1e-8));
    const double part = midpoint([&](double x) { return density(x) * std::exp(1.0 + 0.8 * std::abs(x)); }, -1.5, 2.5);
    CHECK(std::exp(log_gaussian_exp_abs_linear(m, s, 0.8, -1.5, 2.5)) == doctest::Approx(part).epsilon(1e-8));
  }
  {
    const double alpha = 0.1;
    const double ref = midpoint([&](double x) { return density(x) * std::exp(1.0 + alpha * x * x); }, -40, 40);
    CHECK(std::exp(log_gaussian_exp_quadratic(m, s, alpha, -INFINITY, INFINITY)) == doctest::Approx(ref).epsilon(1e-8));
    CHECK(std::isinf(log_gaussian_exp_quadratic(m, s, 1.0, -INFINITY, INFINITY)));
  }
  {
    const double ref = midpoint([&](double x) { return density(x) * std::exp(0.4 * x); }, 0.5, 3.0);
    CHECK(std::exp(log_gaussian_exp_linear(m, s, 0.4, 0.5, 3.0)) == doctest::Approx(ref).epsilon(1e-8));
  }
}

TEST_CASE("fit_geometric") {
  SUBCASE("exact geometric series") {
    const std::vector<double> y{1, 0.5, 0.25, 0.125};
    const auto f = fit_geometric(y);
    CHECK(f.slope == doctest::Approx(std::log(0.5)).epsilon(1e-14));
    CHECK(f.r_squared == doctest::Approx(1.0));
    CHECK(f.residual_max < 1e-12);
  }
  SUBCASE("constant series") {
    const std::vector<double> y{3, 3, 3, 3};
    const auto f = fit_geometric(y);
    CHECK(f.slope == doctest::Approx(0.0));
    CHECK(f.r_squared == doctest::Approx(1.0));
  }
  SUBCASE("zero is dropped and noted") {
    const std::vector<double> y{1, 0.5, 0.0, 0.125, 0.0625};
    const auto f = fit_geometric(y);
    CHECK(f.dropped == 1);
    CHECK(f.points_used == 4);
    CHECK(!f.note.empty());
    CHECK(f.slope == doctest::Approx(std::log(0.5)));
  }
  SUBCASE("too few points") {
    const std::vector<double> y{1, 0.0, 0.0, 0.5};
    CHECK_THROWS_AS(fit_geometric(y), ValidationError);
  }
  SUBCASE("linear mode and prediction band") {
    const std::vector<double> x{1, 2, 3, 4, 5}, y{2.1, 3.9, 6.2, 7.8, 10.1};
    const auto f = fit_geometric(x, y, FitMode::linear);
    CHECK(f.slope == doctest::Approx(1.99).epsilon(1e-12));
    CHECK(f.r_squared > 0.99);
    CHECK(f.r_squared <= 1.0);
    CHECK(f.prediction_sd(10.0) > f.prediction_sd(3.0));
  }
}
