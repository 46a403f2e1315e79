#include <doctest.h>

#include <cmath>

#include "fkstab/error.hpp"
#include "fkstab/finite_oracle.hpp"
#include "fkstab/gaussian.hpp"
#include "fkstab/kalman.hpp"
#include "support.hpp"

using namespace fkstab;
using namespace testing_support;

TEST_CASE("uninformative observations leave the prior in place") {
  const LinearGaussianParams p{1.0, 1e-12, 1e8, 0.0, 1.0};
  const std::vector<double> y{3.0, -2.0, 5.0, 0.5};
  const auto k = kalman_filter(p, y);
  for (std::size_t n = 0; n <= y.size(); ++n) {
    CHECK(std::abs(k.predictive_means[n]) < 1e-6);
    CHECK(k.predictive_variances[n] == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("one conjugate step") {
  const LinearGaussianParams p{0.0, 1.0, 1.0, 0.0, 1.0};
  const std::vector<double> y{0.0};
  const auto k = kalman_filter(p, y);
  CHECK(k.predictive_means[1] == 0.0);
  CHECK(k.predictive_variances[1] == doctest::Approx(1.0));
  CHECK(k.log_z[1] == doctest::Approx(log_normal_pdf(0.0, 0.0, 2.0)));
}

TEST_CASE("property: Kalman log Z equals the joint Gaussian density") {
  ModelGen gen(123);
  for (int trial = 0; trial < 30; ++trial) {
    const LinearGaussianParams p{gen.uniform(-1.2, 1.2), gen.uniform(0.1, 2), gen.uniform(0.1, 2), gen.uniform(-1, 1),
                                 gen.uniform(0.2, 3)};
    std::vector<double> y(gen.index(1, 12));
    for (auto& v : y) v = gen.uniform(-3, 3);
    const auto k = kalman_filter(p, y);
    CHECK(k.log_z.back() == doctest::Approx(joint_gaussian_log_z(p.a, p.q, p.r, p.m0, p.p0, y)).epsilon(1e-10));
    double s = 0.0;
    for (double inc : k.log_increments) s += inc;
    CHECK(std::abs(s - k.log_z.back()) <= 1e-12 * std::max(1.0, std::abs(s)));
    for (double v : k.predictive_variances) CHECK(v > 0.0);
  }
}

TEST_CASE("discretized model agrees with Kalman") {
  const LinearGaussianParams p{0.9, 1.0, 1.0, 0.0, 1.0};
  const auto model = build_linear_gaussian(p);
  const auto path = simulate_hmm(model, 20, 2718);
  const auto y = scalar_observations(path.y);
  const auto k = kalman_filter(p, y);
  const auto grid = discretize_linear_gaussian(p, y);
  const auto t = exact_filter(grid, 20);
  for (std::size_t n = 1; n <= 20; ++n) CHECK(std::abs(t.log_gamma[n] - k.log_z[n]) <= 1e-3);
  CHECK_THROWS_AS(kalman_filter({0.9, 1.0, 0.0, 0.0, 1.0}, y), ValidationError);
}
