#include <doctest.h>

#include <cmath>

#include "fkstab/error.hpp"
#include "fkstab/hmm_model.hpp"
#include "support.hpp"

using namespace fkstab;

namespace {

ErgodicDriftParams ergodic(ObsVariant obs) {
  ErgodicDriftParams p;
  p.obs = obs;
  return p;
}

std::vector<double> x_grid(std::size_t points, double radius) {
  std::vector<double> xs(points);
  for (std::size_t i = 0; i < points; ++i)
    xs[i] = -radius + 2 * radius * static_cast<double>(i) / static_cast<double>(points - 1);
  return xs;
}

}  // namespace

TEST_CASE("observation constraints") {
  const auto box = ObservationConstraint::centered_box(2, 5.0);
  CHECK(box.contains(std::vector<double>{4.9, -5.0}));
  CHECK(!box.contains(std::vector<double>{5.1, 0.0}));
  const auto ann = ObservationConstraint::annulus(0.5, 4.0);
  CHECK(ann.contains(std::vector<double>{-0.5}));
  CHECK(ann.contains(std::vector<double>{4.0}));
  CHECK(!ann.contains(std::vector<double>{0.2}));
  CHECK_THROWS_AS(ObservationConstraint::annulus(2.0, 1.0), ValidationError);
  CHECK_THROWS_AS(ObservationConstraint::annulus(0.0, 1.0), ValidationError);
  const auto fin = ObservationConstraint::finite_set({{0.0}, {1.0}});
  CHECK(fin.contains(std::vector<double>{1.0}));
  CHECK(!fin.contains(std::vector<double>{0.5}));
  CHECK(ObservationConstraint::all().contains(std::vector<double>{1e300}));
}

TEST_CASE("linear-gaussian builder") {
  const auto m = build_linear_gaussian({0.9, 1.0, 1.0, 0.0, 1.0});
  const std::vector<double> x{0.3}, y{1.0};
  CHECK(m.obs_log_likelihood(x, y) == doctest::Approx(-0.5 * std::log(2 * M_PI) - 0.5 * 0.49));
  CHECK_THROWS_AS(build_linear_gaussian({0.9, 1.0, 0.0, 0.0, 1.0}), ValidationError);
  // a = 0: the signal forgets its past.
  const auto iid = build_linear_gaussian({0.0, 2.0, 1.0, 0.0, 1.0});
  const auto mom = iid.signal_moments(std::vector<double>{5.0});
  CHECK(mom.mean[0] == 0.0);
  CHECK(mom.sd == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("binary observations") {
  const auto m = build_ergodic_drift_model(ergodic(ObsVariant::binary));
  CHECK(log_potential(m, 0, std::vector<double>{0.0}, std::vector<double>{1.0}) == doctest::Approx(std::log(0.5)));
  double sup = 0.0;
  for (double x : x_grid(2001, 30)) {
    const double s = std::exp(m.obs_log_likelihood(std::vector<double>{x}, std::vector<double>{0.0})) +
                     std::exp(m.obs_log_likelihood(std::vector<double>{x}, std::vector<double>{1.0}));
    CHECK(std::abs(s - 1.0) <= 1e-12);
    sup = std::max(sup, std::exp(m.obs_log_likelihood(std::vector<double>{x}, std::vector<double>{1.0})));
  }
  CHECK(sup == doctest::Approx(1.0).epsilon(1e-12));
  const auto path = simulate_hmm(m, 50, 3);
  for (const auto& y : path.y) CHECK((y[0] == 0.0 || y[0] == 1.0));
  CHECK_THROWS_AS(log_potential(m, 0, std::vector<double>{0.0}, std::vector<double>{0.5}), ValidationError);
}

TEST_CASE("binary observations in two dimensions sum to one") {
  auto p = ergodic(ObsVariant::binary);
  p.dim = 2;
  const auto m = build_ergodic_drift_model(p);
  const std::vector<double> x{0.3, -1.2};
  double s = 0.0;
  for (const auto& y : m.y_star().points()) s += std::exp(m.obs_log_likelihood(x, y));
  CHECK(std::abs(s - 1.0) <= 1e-12);
}

TEST_CASE("stochastic volatility") {
  const auto m = build_ergodic_drift_model(ergodic(ObsVariant::stoch_vol));
  CHECK(log_potential(m, 0, std::vector<double>{0.0}, std::vector<double>{1.0}) ==
        doctest::Approx(-0.5 * std::log(2 * M_PI) - 0.5));
  for (double y : {0.5, 1.0, 2.0, 3.5, -4.0}) {
    double sup = -INFINITY;
    for (double x : x_grid(10001, 20)) sup = std::max(sup, m.obs_log_likelihood(std::vector<double>{x}, std::vector<double>{y}));
    CHECK(std::exp(sup) <= std::pow(2 * M_PI * M_E, -0.5) / std::abs(y) * (1 + 1e-12));
  }
  const auto path = simulate_hmm(m, 200, 5, SimulationOptions{true, 10000});
  for (const auto& y : path.y) {
    CHECK(std::abs(y[0]) >= 0.5);
    CHECK(std::abs(y[0]) <= 4.0);
  }
  auto bad = ergodic(ObsVariant::stoch_vol);
  bad.beta = 0.0;
  CHECK_THROWS_AS(build_ergodic_drift_model(bad), ValidationError);
}

TEST_CASE("bounded-H gaussian observations") {
  auto p = ergodic(ObsVariant::bounded_gaussian);
  p.obs_map = MapSpec{MapKind::zero, 1.0};
  const auto m = build_ergodic_drift_model(p);
  CHECK(log_potential(m, 0, std::vector<double>{3.0}, std::vector<double>{0.0}) ==
        doctest::Approx(-0.5 * std::log(2 * M_PI)));
  p.obs_map = MapSpec{MapKind::tanh, 1.0};
  const auto t = build_ergodic_drift_model(p);
  double sup = -INFINITY;
  for (double x : x_grid(4001, 10))
    for (double y : x_grid(201, 1)) sup = std::max(sup, t.obs_log_likelihood(std::vector<double>{x}, std::vector<double>{y}));
  CHECK(std::exp(sup) == doctest::Approx(std::pow(2 * M_PI, -0.5)).epsilon(1e-9));
  p.obs_map = MapSpec{MapKind::identity, 1.0};
  CHECK_THROWS_AS(build_ergodic_drift_model(p), ValidationError);
}

TEST_CASE("potential positivity on Y* probes") {
  for (auto obs : {ObsVariant::binary, ObsVariant::bounded_gaussian, ObsVariant::stoch_vol}) {
    const auto m = build_ergodic_drift_model(ergodic(obs));
    const auto& ys = m.y_star();
    std::vector<std::vector<double>> probes;
    if (ys.kind() == ObservationConstraint::Kind::finite_set) probes = ys.points();
    else if (ys.kind() == ObservationConstraint::Kind::annulus) probes = {{0.5}, {-4.0}, {2.0}};
    else probes = {{-5.0}, {0.0}, {5.0}};
    for (double x : x_grid(10000, 50))
      for (const auto& y : probes) CHECK(std::isfinite(log_potential(m, 0, std::vector<double>{x}, y)));
  }
}

TEST_CASE("random walk builder") {
  RandomWalkParams p;
  CHECK_NOTHROW(build_random_walk_model(p));
  p.obs_map = MapSpec{MapKind::sine, 1.0};
  CHECK_NOTHROW(build_random_walk_model(p));
  p.y_star = ObservationConstraint::all();
  try {
    build_random_walk_model(p);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("compact Y* required") != std::string::npos);
  }
  RandomWalkParams q;
  q.delta0 = 0.5;
  CHECK_THROWS_AS(build_random_walk_model(q), ValidationError);
}

TEST_CASE("diffusion bounds are probed") {
  auto p = ergodic(ObsVariant::binary);
  p.diffusion = DiffusionSpec{1.0, 0.5, 0.4, 2.0};
  CHECK_NOTHROW(build_ergodic_drift_model(p));
  p.diffusion = DiffusionSpec{1.0, 0.5, 0.6, 2.0};
  CHECK_THROWS_AS(build_ergodic_drift_model(p), ValidationError);
}

TEST_CASE("simulation is deterministic") {
  const auto m = build_linear_gaussian({0.9, 1.0, 1.0, 0.0, 1.0});
  const auto a = simulate_hmm(m, 10, 99);
  const auto b = simulate_hmm(m, 10, 99);
  CHECK(a.x.size() == 11);
  CHECK(a.y.size() == 11);
  CHECK(a.x == b.x);
  CHECK(a.y == b.y);
  CHECK(simulate_hmm(m, 10, 100).y != a.y);
}

TEST_CASE("rejection cap reports the acceptance rate") {
  auto p = ergodic(ObsVariant::stoch_vol);
  p.y_star = ObservationConstraint::annulus(1000.0, 1001.0);
  const auto m = build_ergodic_drift_model(p);
  try {
    simulate_hmm(m, 3, 1, SimulationOptions{true, 50});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("acceptance") != std::string::npos);
  }
}
