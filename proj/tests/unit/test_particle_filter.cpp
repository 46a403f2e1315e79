#include <doctest.h>

#include <cmath>
#include <limits>

#include "fkstab/error.hpp"
#include "fkstab/finite_oracle.hpp"
#include "fkstab/particle_filter.hpp"
#include "fkstab/stability_lab.hpp"
#include "support.hpp"

using namespace fkstab;
using namespace testing_support;

namespace {

FiniteModel unit_potential_model() {
  return build_finite_model({two_by_two(0.9, 0.1, 0.2, 0.8)}, {vec({1, 1})}, vec({0.5, 0.5}), vec({1, 2}));
}

}  // namespace

TEST_CASE("multinomial resampling law") {
  RandomStream rng(3);
  SUBCASE("uniform weights") {
    const std::vector<double> lw(4, 0.0);
    std::vector<double> counts(4, 0.0);
    const std::size_t draws = 100000;
    const auto a = multinomial_resample(lw, draws, rng);
    REQUIRE(a.size() == draws);
    for (std::size_t i = 1; i < a.size(); ++i) CHECK(a[i] >= a[i - 1]);
    for (auto i : a) counts[i] += 1;
    const double sd = std::sqrt(0.25 * 0.75 / draws);
    for (double c : counts) CHECK(std::abs(c / draws - 0.25) <= 3 * sd);
  }
  SUBCASE("zero-mass index is never drawn") {
    const std::vector<double> lw{0.0, -std::numeric_limits<double>::infinity(), 0.5};
    for (auto i : multinomial_resample(lw, 10000, rng)) CHECK(i != 1);
  }
  SUBCASE("weights 2:1, single draws") {
    const std::vector<double> lw{std::log(2.0), 0.0};
    std::size_t zeros = 0;
    const std::size_t reps = 100000;
    std::vector<std::size_t> a;
    for (std::size_t r = 0; r < reps; ++r) {
      multinomial_resample(lw, 1, rng, a);
      zeros += a[0] == 0;
    }
    const double sd = std::sqrt(2.0 / 9.0 / reps);
    CHECK(std::abs(static_cast<double>(zeros) / reps - 2.0 / 3.0) <= 3 * sd);
  }
  SUBCASE("all weights -inf") {
    const std::vector<double> lw(3, -std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(multinomial_resample(lw, 3, rng), NumericalError);
  }
}

TEST_CASE("init_particles") {
  const auto m = two_state_model().with_initial(vec({1, 0}));
  FiniteSubstrate sub(m);
  const RandomStream stream(1, 0);
  const auto s = init_particles(sub, 50, stream);
  for (double x : s.positions) CHECK(x == 0.0);
  CHECK(s.log_z == 0.0);
  CHECK(s.time == 0);
  const auto one = init_particles(FiniteSubstrate(two_state_model()), 1, stream);
  CHECK(one.n_particles == 1);
  CHECK_THROWS_AS(init_particles(sub, 0, stream), ValidationError);
  const auto again = init_particles(FiniteSubstrate(two_state_model()), 100, stream);
  const auto third = init_particles(FiniteSubstrate(two_state_model()), 100, stream);
  CHECK(again.positions == third.positions);
}

TEST_CASE("unit potentials keep log Z at zero and φ ≡ 1 at one") {
  FiniteSubstrate sub(unit_potential_model());
  const std::vector<TestFunction> phis{constant_test_function(1.0)};
  for (std::size_t big_n : {1, 7, 100}) {
    const auto t = run_filter(sub, big_n, 30, RandomStream(9, big_n), phis);
    for (std::size_t p = 0; p <= 30; ++p) {
      CHECK(t.log_z[p] == 0.0);
      CHECK(t.estimates[p][0] == 1.0);
    }
  }
}

TEST_CASE("single particle accumulates its own potentials") {
  const auto m = two_state_model();
  FiniteSubstrate sub(m);
  const RandomStream stream(4, 0);
  auto state = init_particles(sub, 1, stream);
  double expect = 0.0;
  StepWorkspace ws;
  for (int n = 0; n < 10; ++n) {
    expect += m.log_potential(state.time)[static_cast<Eigen::Index>(state.positions[0])];
    advance(state, sub, stream, ws);
    CHECK(state.log_z == doctest::Approx(expect).epsilon(1e-15));
  }
}

TEST_CASE("determinism and horizon checks") {
  ModelGen gen(12);
  const auto m = gen.model(4, 6);
  FiniteSubstrate sub(m);
  const std::vector<TestFunction> phis{finite_test_function(vec({1, 2, 3, 4}))};
  const auto a = run_filter(sub, 64, 6, RandomStream(5, 2), phis);
  const auto b = run_filter(sub, 64, 6, RandomStream(5, 2), phis);
  CHECK(a.log_z == b.log_z);
  CHECK(a.estimates == b.estimates);
  const auto c = run_filter(sub, 64, 6, RandomStream(5, 3), phis);
  CHECK(a.log_z != c.log_z);
  CHECK_THROWS_AS(run_filter(sub, 64, 7, RandomStream(5, 2), phis), ValidationError);
}

namespace {

// Potential that vanishes everywhere at time 0.
struct DeadSubstrate {
  std::size_t dim() const { return 1; }
  void sample_initial(RandomStream& rng, std::span<double> x) const { x[0] = rng.uniform(); }
  double log_potential(std::size_t, std::span<const double>) const { return -std::numeric_limits<double>::infinity(); }
  void mutate(std::size_t, std::span<const double> x, RandomStream&, std::span<double> out) const { out[0] = x[0]; }
  std::optional<std::size_t> horizon_limit() const { return std::nullopt; }
};

}  // namespace

TEST_CASE("all potentials underflow") {
  DeadSubstrate sub;
  auto s = init_particles(sub, 4, RandomStream(1));
  try {
    s = step(s, sub, RandomStream(1));
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("max log-potential") != std::string::npos);
  }
}

TEST_CASE("E[Z_1^N] = 1.5 on the two-state model") {
  FiniteSubstrate sub(two_state_model());
  const std::vector<TestFunction> none;
  const auto stats = run_replicates(sub, 10000, 1, 10000, 17, none, ReplicateOptions{0, false, {}});
  const auto& z = stats.estimator("z");
  CHECK(std::abs(z.mean[1] - 1.5) <= 3 * z.std_error[1]);
}

TEST_CASE("resampling conditional expectation on a fixed generation") {
  // Previous generation: 3 particles in state 0, 2 in state 1.
  const auto m = two_state_model();
  FiniteSubstrate sub(m);
  ParticleState prev;
  prev.dim = 1;
  prev.n_particles = 5;
  prev.positions = {0, 0, 0, 1, 1};
  const Vector phi = vec({1, 0});
  const Vector empirical = vec({0.6, 0.4});
  const double expect = (empirical.transpose() * m.q_matrix(1) * phi)(0) / empirical.dot(m.potential(0));
  const std::size_t reps = 100000;
  std::vector<double> values(reps);
  StepWorkspace ws;
  for (std::size_t r = 0; r < reps; ++r) {
    ParticleState s = prev;
    advance(s, sub, RandomStream(21, r), ws);
    double acc = 0.0;
    for (double x : s.positions) acc += phi[static_cast<Eigen::Index>(x)];
    values[r] = acc / 5.0;
  }
  const auto mom = sample_moments(values);
  CHECK(std::abs(mom.mean - expect) <= 3 * mom.std_error);
}

TEST_CASE("filter estimate against the asymptotic variance band") {
  const auto m = two_state_model();
  const Vector phi = vec({1, 0});
  const std::size_t n = 5;
  const auto t = exact_filter(m, n);
  const double sigma = std::sqrt(asymptotic_variance(m, t, phi, n));
  const std::vector<TestFunction> phis{finite_test_function(phi)};
  const auto run = run_filter(FiniteSubstrate(m), 100000, n, RandomStream(8, 0), phis);
  CHECK(std::abs(run.estimates[n][0] - t.etas[n].dot(phi)) <= 4 * sigma / std::sqrt(100000.0));
}

TEST_CASE("hmm substrate validates the record") {
  const auto model = build_linear_gaussian({0.9, 1, 1, 0, 1});
  CHECK_NOTHROW(HmmSubstrate(model, {{0.1}, {0.2}}));
  const auto rw = build_random_walk_model(RandomWalkParams{});
  CHECK_THROWS_AS(HmmSubstrate(rw, {{0.1}, {7.0}}), ValidationError);
}
