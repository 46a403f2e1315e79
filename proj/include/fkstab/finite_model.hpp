#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "fkstab/random.hpp"

namespace fkstab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Fully enumerated Feynman-Kac model on K states.
///
/// Step indexing: transition(n) is M_n for n >= 1 and potential(n) is G_n
/// for n >= 0, so Q_n = diag(G_{n-1}) M_n. A list of length one is reused at
/// every step. Potentials are held as logs.
class FiniteModel {
 public:
  std::size_t size() const noexcept { return static_cast<std::size_t>(initial_.size()); }

  const Matrix& transition(std::size_t n) const;
  const Vector& log_potential(std::size_t n) const;
  Vector potential(std::size_t n) const { return log_potential(n).array().exp(); }
  /// Q_n = diag(G_{n-1}) M_n, for n >= 1.
  Matrix q_matrix(std::size_t n) const;

  const Vector& initial() const noexcept { return initial_; }
  const std::optional<Vector>& lyapunov() const noexcept { return lyapunov_; }
  const std::vector<double>& states() const noexcept { return states_; }

  std::size_t transition_count() const noexcept { return transitions_.size(); }
  std::size_t potential_count() const noexcept { return log_potentials_.size(); }
  bool homogeneous() const noexcept { return transitions_.size() == 1 && log_potentials_.size() == 1; }
  /// Largest n for which M_1..M_n and G_0..G_{n-1} exist; empty when unbounded.
  std::optional<std::size_t> horizon_limit() const noexcept;
  /// Throws ValidationError when the model cannot be run to horizon n.
  void require_horizon(std::size_t n) const;

  FiniteModel with_initial(Vector initial) const;
  FiniteModel with_lyapunov(std::optional<Vector> lyapunov) const;

  const std::vector<Matrix>& transitions() const noexcept { return transitions_; }
  const std::vector<Vector>& log_potentials() const noexcept { return log_potentials_; }

  bool operator==(const FiniteModel& other) const;

 private:
  friend FiniteModel build_finite_model_log(std::vector<Matrix>, std::vector<Vector>, Vector,
                                            std::optional<Vector>, std::vector<double>);
  FiniteModel() = default;

  std::vector<Matrix> transitions_;
  std::vector<Vector> log_potentials_;
  Vector initial_;
  std::optional<Vector> lyapunov_;
  std::vector<double> states_;
};

FiniteModel build_finite_model(std::vector<Matrix> transitions, std::vector<Vector> potentials,
                               Vector initial, std::optional<Vector> lyapunov = std::nullopt,
                               std::vector<double> states = {});

FiniteModel build_finite_model_log(std::vector<Matrix> transitions, std::vector<Vector> log_potentials,
                                   Vector initial, std::optional<Vector> lyapunov = std::nullopt,
                                   std::vector<double> states = {});

struct RandomModelOptions {
  std::size_t states = 4;
  std::size_t horizon = 20;       // number of distinct M_n / G_n drawn when inhomogeneous
  bool homogeneous_transition = false;
  bool homogeneous_potential = false;
  double potential_low = 0.5;
  double potential_high = 2.0;
  double laziness = 0.0;          // M = laziness * I + (1 - laziness) * R
  double lyapunov_high = 3.0;     // V drawn uniform on [1, lyapunov_high]
  double min_entry = 0.0;         // floor added to every raw entry before row normalization
};

/// Seeded random model with strictly positive M and G, and a V >= 1.
FiniteModel random_finite_model(RandomStream& rng, const RandomModelOptions& options);

/// Two-state example with M = [[0.9,0.1],[0.2,0.8]], μ = [0.5,0.5] and
/// the given homogeneous potential; V = [1,2].
FiniteModel two_state_model(double g0 = 2.0, double g1 = 1.0);

}  // namespace fkstab
