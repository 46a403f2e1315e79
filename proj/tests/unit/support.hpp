// Independent reference computations and random-model generators for the
// unit and acceptance tests. Nothing here calls the library's recursions.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "fkstab/finite_model.hpp"

namespace testing_support {

using fkstab::Matrix;
using fkstab::Vector;

inline Matrix two_by_two(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

/// Random model generator on std::mt19937_64, independent of the library RNG.
struct ModelGen {
  std::mt19937_64 rng;
  explicit ModelGen(std::uint64_t seed) : rng(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  std::size_t index(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); }

  Matrix stochastic(std::size_t k, double laziness = 0.0) {
    Matrix m(k, k);
    for (std::size_t i = 0; i < k; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < k; ++j) s += (m(i, j) = uniform(0.05, 1.0));
      m.row(i) /= s;
    }
    return laziness * Matrix::Identity(k, k) + (1.0 - laziness) * m;
  }
  Vector positive(std::size_t k, double lo, double hi) {
    Vector v(k);
    for (auto& x : v) x = uniform(lo, hi);
    return v;
  }
  Vector probability(std::size_t k) {
    Vector v = positive(k, 0.05, 1.0);
    return v / v.sum();
  }

  /// Inhomogeneous model with n transitions and n potentials.
  fkstab::FiniteModel model(std::size_t k, std::size_t n, double g_lo = 0.5, double g_hi = 2.0,
                            double laziness = 0.0) {
    std::vector<Matrix> ms;
    std::vector<Vector> gs;
    for (std::size_t i = 0; i < n; ++i) {
      ms.push_back(stochastic(k, laziness));
      gs.push_back(positive(k, g_lo, g_hi));
    }
    return fkstab::build_finite_model(ms, gs, probability(k), positive(k, 1.0, 3.0));
  }
};

/// γ_n(f) by summing over every path x_0..x_n (K^{n+1} terms).
inline double path_sum(const fkstab::FiniteModel& m, std::size_t n, const Vector& f) {
  const std::size_t k = m.size();
  std::vector<std::size_t> path(n + 1, 0);
  double total = 0.0;
  for (;;) {
    double w = m.initial()[path[0]];
    for (std::size_t p = 1; p <= n; ++p)
      w *= std::exp(m.log_potential(p - 1)[path[p - 1]]) * m.transition(p)(path[p - 1], path[p]);
    total += w * f[path[n]];
    std::size_t i = 0;
    while (i <= n && ++path[i] == k) path[i++] = 0;
    if (i > n) break;
  }
  return total;
}

/// Exact E[(Z_n^N / Z_n - 1)^2] by enumerating every particle configuration
/// of the multinomial bootstrap filter.
inline double brute_force_relvar(const fkstab::FiniteModel& m, std::size_t big_n, std::size_t n) {
  const std::size_t k = m.size();
  std::size_t configs = 1;
  for (std::size_t i = 0; i < big_n; ++i) configs *= k;
  auto decode = [&](std::size_t c) {
    std::vector<std::size_t> xs(big_n);
    for (std::size_t i = 0; i < big_n; ++i) {
      xs[i] = c % k;
      c /= k;
    }
    return xs;
  };
  // (probability, configuration, Z so far)
  struct Node {
    double prob;
    std::size_t config;
    double z;
  };
  std::vector<Node> nodes;
  for (std::size_t c = 0; c < configs; ++c) {
    double p = 1.0;
    for (auto x : decode(c)) p *= m.initial()[x];
    if (p > 0) nodes.push_back({p, c, 1.0});
  }
  for (std::size_t step = 1; step <= n; ++step) {
    const Vector g = m.potential(step - 1);
    const Matrix& mm = m.transition(step);
    std::vector<Node> next;
    for (const auto& node : nodes) {
      const auto xs = decode(node.config);
      double mass = 0.0;
      for (auto x : xs) mass += g[x];
      Vector law = Vector::Zero(k);
      for (auto x : xs) law += g[x] / mass * mm.row(x).transpose();
      const double z = node.z * mass / static_cast<double>(big_n);
      for (std::size_t c = 0; c < configs; ++c) {
        double p = node.prob;
        for (auto x : decode(c)) p *= law[x];
        if (p > 0) next.push_back({p, c, z});
      }
    }
    nodes = std::move(next);
  }
  const double exact = path_sum(m, n, Vector::Ones(k));
  double out = 0.0;
  for (const auto& node : nodes) out += node.prob * (node.z / exact - 1.0) * (node.z / exact - 1.0);
  return out;
}

/// log density of y_0..y_{n-1} under the scalar AR(1) model, from the
/// joint Gaussian covariance (no recursion).
inline double joint_gaussian_log_z(double a, double q, double r, double m0, double p0, const std::vector<double>& y) {
  const auto n = static_cast<Eigen::Index>(y.size());
  if (n == 0) return 0.0;
  std::vector<double> var(y.size());
  var[0] = p0;
  for (std::size_t i = 1; i < y.size(); ++i) var[i] = a * a * var[i - 1] + q;
  Matrix cov(n, n);
  Vector mean(n), obs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    mean[i] = m0 * std::pow(a, static_cast<double>(i));
    obs[i] = y[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto lo = std::min(i, j);
      cov(i, j) = std::pow(a, static_cast<double>(std::abs(i - j))) * var[static_cast<std::size_t>(lo)];
    }
    cov(i, i) += r;
  }
  Eigen::LLT<Matrix> llt(cov);
  const Vector diff = obs - mean;
  const Vector sol = llt.matrixL().solve(diff);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (static_cast<double>(n) * std::log(2.0 * M_PI) + logdet + sol.squaredNorm());
}

/// Composite midpoint rule on a fine grid, used as a slow reference.
inline double midpoint(const std::function<double(double)>& f, double a, double b, std::size_t m = 400000) {
  const double h = (b - a) / static_cast<double>(m);
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) s += f(a + (static_cast<double>(i) + 0.5) * h);
  return s * h;
}

}  // namespace testing_support
