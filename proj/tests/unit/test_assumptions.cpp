#include <doctest.h>

#include <cmath>

#include "fkstab/assumptions.hpp"
#include "fkstab/error.hpp"
#include "fkstab/gaussian.hpp"
#include "support.hpp"

using namespace fkstab;
using namespace testing_support;

namespace {

// log Q_n(e^V)(x) computed directly from G_{n-1} and M_n.
double log_qv(const FiniteModel& m, std::size_t n, Eigen::Index x, const Vector& v) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) s += m.transition(n)(x, j) * std::exp(v[j]);
  return m.log_potential(n - 1)[x] + std::log(s);
}

// ∫N(x'; m, s²) e^{1+|x'|} dx' in closed form.
double abs_linear_integral(double m, double s) {
  const double up = std::exp(1 + m + 0.5 * s * s) * 0.5 * std::erfc(-(m + s * s) / (s * std::sqrt(2.0)));
  const double down = std::exp(1 - m + 0.5 * s * s) * 0.5 * std::erfc((m - s * s) / (s * std::sqrt(2.0)));
  return up + down;
}

}  // namespace

TEST_CASE("unit potentials and constant V give b = δ") {
  ModelGen gen(1);
  const auto m = build_finite_model({gen.stochastic(3)}, {vec({1, 1, 1})}, gen.probability(3), vec({1, 1, 1}));
  const double levels[] = {1.0};
  const auto c = check_finite_drift(m, 0.3, levels);
  CHECK(c.status == CertificateStatus::certified);
  CHECK(c.levels[0].set_size == 3);
  CHECK(c.levels[0].b == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("two-state certificate") {
  const double levels[] = {2.0};
  const auto c = check_finite_drift(two_state_model(), 0.1, levels);
  REQUIRE(c.status == CertificateStatus::certified);
  CHECK(c.levels[0].b == doctest::Approx(0.951712259300375).epsilon(1e-14));
  CHECK(c.d_underline == 2.0);
  CHECK(c.levels[0].eps_minus() <= c.levels[0].eps_plus());
  // Q = diag(2,1) M against ν = [1/2, 1/2]: ratios 2·Q(x,x').
  CHECK(c.levels[0].eps_minus() == doctest::Approx(0.4));
  CHECK(c.levels[0].eps_plus() == doctest::Approx(3.6));
}

TEST_CASE("finite checker errors") {
  const auto flat = two_state_model().with_lyapunov(vec({1, 1}));
  const double half[] = {0.5};
  try {
    check_finite_drift(flat, 0.1, half);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("C_d is empty") != std::string::npos);
  }
  const double two[] = {2.0};
  CHECK_THROWS_AS(check_finite_drift(two_state_model(), 1.0, two), ValidationError);
  CHECK_THROWS_AS(check_finite_drift(two_state_model(), 0.0, two), ValidationError);
  CHECK_THROWS_AS(check_finite_drift(two_state_model().with_lyapunov(std::nullopt), 0.1, two), ValidationError);
}

TEST_CASE("property: finite certification is exact") {
  ModelGen gen(77);
  int certified = 0, violated = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k = gen.index(2, 6);
    const auto m = gen.model(k, gen.index(1, 5));
    const Vector& v = *m.lyapunov();
    const double delta = gen.uniform(0.05, 0.5);
    const double levels[] = {gen.uniform(v.minCoeff(), v.maxCoeff())};
    const auto c = check_finite_drift(m, delta, levels);
    const auto& lr = c.levels[0];
    const std::size_t steps = m.horizon_limit().value_or(1);
    if (c.status == CertificateStatus::certified) {
      ++certified;
      for (std::size_t n = 1; n <= steps; ++n)
        for (Eigen::Index x = 0; x < v.size(); ++x) {
          const double bound = v[x] * (1 - delta) + (v[x] <= levels[0] ? lr.b : 0.0);
          CHECK(log_qv(m, n, x, v) <= bound + 1e-12 * std::max(1.0, std::abs(bound)));
        }
      double expect = -INFINITY;
      for (std::size_t n = 1; n <= steps; ++n)
        for (Eigen::Index x = 0; x < v.size(); ++x)
          if (v[x] <= levels[0]) expect = std::max(expect, log_qv(m, n, x, v) - v[x] * (1 - delta));
      CHECK(lr.b == doctest::Approx(expect).epsilon(1e-12));
    } else {
      REQUIRE(c.status == CertificateStatus::violated);
      ++violated;
      REQUIRE(lr.witness);
      CHECK(lr.witness->condition == "H1-drift");
      const auto x = static_cast<Eigen::Index>(lr.witness->x[0]);
      CHECK(v[x] > levels[0]);
      CHECK(log_qv(m, lr.witness->step, x, v) > v[x] * (1 - delta));
    }
  }
  CHECK(certified > 0);
  CHECK(violated > 0);
}

TEST_CASE("property: level sets are nested") {
  ModelGen gen(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = gen.model(6, 3);
    const Vector& v = *m.lyapunov();
    std::vector<double> levels;
    for (double d = v.minCoeff(); d <= v.maxCoeff() + 0.5; d += 0.25) levels.push_back(d);
    const auto c = check_finite_drift(m, 0.1, levels);
    for (std::size_t i = 1; i < c.levels.size(); ++i) {
      CHECK(c.levels[i].set_size >= c.levels[i - 1].set_size);
      for (Eigen::Index x = 0; x < v.size(); ++x)
        if (c.levels[i - 1].nu[x] > 0) CHECK(c.levels[i].nu[x] > 0);
    }
    for (const auto& lr : c.levels)
      if (lr.minorization_ok && lr.majorization_ok) CHECK(lr.log_eps_minus <= lr.log_eps_plus);
  }
}

TEST_CASE("δ scan picks the largest certified value") {
  const double levels[] = {2.0};
  const auto c = check_finite_drift(two_state_model(), std::nullopt, levels);
  REQUIRE(c.status == CertificateStatus::certified);
  CHECK(c.delta == 0.5);
  CHECK(c.delta_scan.size() >= 1);
}

TEST_CASE("transfer to v^α") {
  const double levels[] = {2.0, 16.0};
  const auto c = check_finite_drift(two_state_model(), 0.1, levels);
  REQUIRE(c.status == CertificateStatus::certified);
  const double b16 = c.level(16.0).b;

  const auto t = transfer_drift(c, 0.5, 2.0);
  REQUIRE(t.status == CertificateStatus::certified);
  CHECK(t.delta == 0.05);
  // d = 2 fails αd(δ-δ0) >= (1-α) log ḡ; d = 16 passes.
  REQUIRE(t.levels.size() == 1);
  CHECK(t.levels[0].level == 8.0);
  CHECK(t.levels[0].b == doctest::Approx(0.5 * 16 * 0.9 + 0.5 * b16 + 0.5 * std::log(2.0)).epsilon(1e-14));

  const double half_levels[] = {8.0};
  FiniteDriftOptions opts;
  opts.lyapunov = 0.5 * *two_state_model().lyapunov();
  const auto recheck = check_finite_drift(two_state_model(), t.delta, half_levels, opts);
  CHECK(recheck.status == CertificateStatus::certified);
  CHECK(recheck.levels[0].b <= t.levels[0].b + 1e-12);

  const double a = 1 - 1e-9;
  const auto limit = transfer_drift(c, a, 2.0);
  const auto& l16 = limit.level(a * 16.0);
  CHECK(std::abs(l16.level - 16.0) < 1e-6);
  CHECK(std::abs(l16.b - (16.0 * 0.9 + b16)) < 1e-6);
  CHECK(std::abs(l16.log_eps_minus - c.level(16.0).log_eps_minus) < 1e-12);

  CHECK_THROWS_AS(transfer_drift(c, 1.0, 2.0), ValidationError);
  CHECK_THROWS_AS(transfer_drift(c, 0.5, std::nullopt), ValidationError);
  const double low[] = {1.0};
  const auto bad = check_finite_drift(two_state_model(10.0, 1.0).with_lyapunov(vec({1, 5})), 0.5, low);
  REQUIRE(bad.status != CertificateStatus::certified);
  CHECK_THROWS_AS(transfer_drift(bad, 0.5, 10.0), ValidationError);
}

TEST_CASE("drift integral against the closed form") {
  const LyapunovSpec v{LyapunovSpec::Kind::abs_linear, 1.0, 2.0};
  for (double m : {-3.0, -0.2, 0.0, 0.7, 5.0})
    for (double s : {0.5, 1.0, 2.0}) {
      const auto r = drift_integral(m, s, v, 512, QuadratureRule::simpson);
      CHECK(std::abs(std::exp(r.log_value - std::log(abs_linear_integral(m, s))) - 1) <= 1e-6);
      CHECK(r.log_exact == doctest::Approx(std::log(abs_linear_integral(m, s))).epsilon(1e-12));
    }
  const LyapunovSpec quad{LyapunovSpec::Kind::quadratic, 1.0, 2.0};
  const double alpha = quad.quadratic_coefficient();
  for (double m : {-2.0, 0.0, 1.5}) {
    const double s = 1.0;
    const double k = 1 - 2 * alpha * s * s;
    const double exact = 1 - 0.5 * std::log(k) + alpha * m * m / k;
    const auto r = drift_integral(m, s, quad, 512, QuadratureRule::simpson);
    CHECK(std::abs(r.log_value - exact) <= 1e-6);
  }
}

TEST_CASE("signal-only drift") {
  ErgodicDriftParams p;
  const auto ergodic = build_ergodic_drift_model(p);
  const double levels[] = {4.0, 6.0, 8.0, 12.0};
  const auto c = check_signal_drift(ergodic, 1.0, std::nullopt, levels);
  CHECK(c.status == CertificateStatus::certified);
  CHECK(c.d_underline.has_value());
  CHECK(c.g_bar == 1.0);

  p.drift = DriftSpec{DriftKind::zero, 0.0};
  const auto rw = build_ergodic_drift_model(p);
  CHECK(check_signal_drift(rw, 1.0, 0.1, levels).status == CertificateStatus::violated);

  try {
    check_signal_drift(ergodic, 0.0, 0.1, levels);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("c must be positive") != std::string::npos);
  }
}

TEST_CASE("grid checker on the random walk with bounded H") {
  RandomWalkParams p;
  p.obs_map = MapSpec{MapKind::sine, 1.0};
  const auto m = build_random_walk_model(p);
  const double levels[] = {4.0, 8.0};
  const auto c = check_grid_drift(m, m.default_lyapunov(), 0.1, levels);
  REQUIRE(c.status == CertificateStatus::violated);
  REQUIRE(c.witness);
  CHECK(c.witness->condition == "H1-drift");
  CHECK(std::abs(c.witness->x[0]) >= 10.0);
  CHECK(c.witness->lhs > c.witness->rhs);
}

TEST_CASE("grid checker input errors") {
  const auto lg = build_linear_gaussian({0.9, 1, 1, 0, 1});
  const double levels[] = {4.0};
  CHECK_THROWS_AS(check_grid_drift(lg, lg.default_lyapunov(), 0.1, levels, GridSpec{12.0, 32}), ValidationError);
  CHECK_THROWS_AS(check_grid_drift(lg, lg.default_lyapunov(), 0.1, levels, GridSpec{}, std::vector<std::vector<double>>{}),
                  ValidationError);
}

TEST_CASE("certificate JSON") {
  const double levels[] = {2.0};
  const auto j = to_json(check_finite_drift(two_state_model(), 0.1, levels));
  CHECK(j["status"] == "certified");
  CHECK(j["domain"] == "finite");
  CHECK(grid_spec_from_json(to_json(GridSpec{10.0, 256})) == GridSpec{10.0, 256});
  CHECK_THROWS_AS(grid_spec_from_json(nlohmann::json{{"radius", 1.0}, {"pts", 64}}), ValidationError);
}
