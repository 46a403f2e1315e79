#include "fkstab/finite_model.hpp"

#include <cmath>
#include <sstream>

#include "fkstab/error.hpp"

namespace fkstab {
namespace {

constexpr double kStochasticTol = 1e-12;

template <class... Parts>
[[noreturn]] void reject(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ValidationError(os.str());
}

void validate_transition(const Matrix& m, std::size_t k, std::size_t step) {
  if (static_cast<std::size_t>(m.rows()) != k || static_cast<std::size_t>(m.cols()) != k)
    reject("transition ", step, " has shape ", m.rows(), "x", m.cols(), ", expected ", k, "x", k);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j)) || m(i, j) < 0.0)
        reject("transition ", step, " entry (", i, ",", j, ") = ", m(i, j), " is negative or not finite");
    }
    const double s = m.row(i).sum();
    if (std::abs(s - 1.0) > kStochasticTol) reject("transition ", step, " row ", i, " sums to ", s);
  }
}

}  // namespace

const Matrix& FiniteModel::transition(std::size_t n) const {
  if (n == 0) throw ValidationError("transitions are indexed from n = 1");
  if (transitions_.size() == 1) return transitions_.front();
  if (n > transitions_.size())
    reject("transition M_", n, " requested but only ", transitions_.size(), " are defined");
  return transitions_[n - 1];
}

const Vector& FiniteModel::log_potential(std::size_t n) const {
  if (log_potentials_.size() == 1) return log_potentials_.front();
  if (n >= log_potentials_.size())
    reject("potential G_", n, " requested but only ", log_potentials_.size(), " are defined");
  return log_potentials_[n];
}

Matrix FiniteModel::q_matrix(std::size_t n) const {
  return potential(n - 1).asDiagonal() * transition(n);
}

std::optional<std::size_t> FiniteModel::horizon_limit() const noexcept {
  std::optional<std::size_t> limit;
  if (transitions_.size() > 1) limit = transitions_.size();
  if (log_potentials_.size() > 1) {
    const std::size_t p = log_potentials_.size();
    limit = limit ? std::min(*limit, p) : p;
  }
  return limit;
}

void FiniteModel::require_horizon(std::size_t n) const {
  const auto limit = horizon_limit();
  if (limit && n > *limit) reject("horizon ", n, " exceeds the model's defined steps (", *limit, ")");
}

FiniteModel FiniteModel::with_initial(Vector initial) const {
  return build_finite_model_log(transitions_, log_potentials_, std::move(initial), lyapunov_, states_);
}

FiniteModel FiniteModel::with_lyapunov(std::optional<Vector> lyapunov) const {
  return build_finite_model_log(transitions_, log_potentials_, initial_, std::move(lyapunov), states_);
}

bool FiniteModel::operator==(const FiniteModel& other) const {
  auto same_list = [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].rows() != b[i].rows() || a[i].cols() != b[i].cols() || a[i] != b[i]) return false;
    return true;
  };
  if (!same_list(transitions_, other.transitions_) || !same_list(log_potentials_, other.log_potentials_))
    return false;
  if (initial_.size() != other.initial_.size() || initial_ != other.initial_) return false;
  if (lyapunov_.has_value() != other.lyapunov_.has_value()) return false;
  if (lyapunov_ && *lyapunov_ != *other.lyapunov_) return false;
  return states_ == other.states_;
}

FiniteModel build_finite_model_log(std::vector<Matrix> transitions, std::vector<Vector> log_potentials,
                                   Vector initial, std::optional<Vector> lyapunov,
                                   std::vector<double> states) {
  const auto k = static_cast<std::size_t>(initial.size());
  if (k == 0) reject("initial vector is empty");
  if (transitions.empty()) reject("at least one transition matrix is required");
  if (log_potentials.empty()) reject("at least one potential vector is required");
  for (std::size_t i = 0; i < transitions.size(); ++i) validate_transition(transitions[i], k, i + 1);
  for (std::size_t n = 0; n < log_potentials.size(); ++n) {
    const Vector& lg = log_potentials[n];
    if (static_cast<std::size_t>(lg.size()) != k)
      reject("potential ", n, " has length ", lg.size(), ", expected ", k);
    for (Eigen::Index i = 0; i < lg.size(); ++i)
      if (!std::isfinite(lg[i])) reject("potential ", n, " entry ", i, " is not strictly positive and finite");
  }
  for (Eigen::Index i = 0; i < initial.size(); ++i)
    if (!std::isfinite(initial[i]) || initial[i] < 0.0) reject("initial entry ", i, " = ", initial[i], " is negative");
  if (std::abs(initial.sum() - 1.0) > kStochasticTol) reject("initial vector sums to ", initial.sum());
  if (lyapunov) {
    if (static_cast<std::size_t>(lyapunov->size()) != k)
      reject("lyapunov vector has length ", lyapunov->size(), ", expected ", k);
    for (Eigen::Index i = 0; i < lyapunov->size(); ++i)
      if (!std::isfinite((*lyapunov)[i]) || (*lyapunov)[i] < 1.0)
        reject("lyapunov entry ", i, " = ", (*lyapunov)[i], " is below 1");
  }
  if (states.empty()) {
    states.resize(k);
    for (std::size_t i = 0; i < k; ++i) states[i] = static_cast<double>(i);
  } else if (states.size() != k) {
    reject("state list has length ", states.size(), ", expected ", k);
  }

  FiniteModel model;
  model.transitions_ = std::move(transitions);
  model.log_potentials_ = std::move(log_potentials);
  model.initial_ = std::move(initial);
  model.lyapunov_ = std::move(lyapunov);
  model.states_ = std::move(states);
  return model;
}

FiniteModel build_finite_model(std::vector<Matrix> transitions, std::vector<Vector> potentials,
                               Vector initial, std::optional<Vector> lyapunov,
                               std::vector<double> states) {
  std::vector<Vector> logs;
  logs.reserve(potentials.size());
  for (std::size_t n = 0; n < potentials.size(); ++n) {
    for (Eigen::Index i = 0; i < potentials[n].size(); ++i)
      if (!(potentials[n][i] > 0.0) || !std::isfinite(potentials[n][i]))
        reject("potential ", n, " entry ", i, " = ", potentials[n][i], " is not strictly positive");
    logs.push_back(potentials[n].array().log().matrix());
  }
  return build_finite_model_log(std::move(transitions), std::move(logs), std::move(initial),
                                std::move(lyapunov), std::move(states));
}

FiniteModel random_finite_model(RandomStream& rng, const RandomModelOptions& o) {
  if (o.states == 0) reject("random model needs at least one state");
  if (!(o.potential_low > 0.0) || o.potential_high < o.potential_low) reject("bad potential range");
  const auto k = static_cast<Eigen::Index>(o.states);
  auto draw_transition = [&] {
    Matrix m(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      for (Eigen::Index j = 0; j < k; ++j) m(i, j) = rng.uniform() + o.min_entry;
      m.row(i) /= m.row(i).sum();
    }
    m = o.laziness * Matrix::Identity(k, k) + (1.0 - o.laziness) * m;
    for (Eigen::Index i = 0; i < k; ++i) m.row(i) /= m.row(i).sum();
    return m;
  };
  auto draw_potential = [&] {
    Vector g(k);
    for (Eigen::Index i = 0; i < k; ++i)
      g[i] = o.potential_low + (o.potential_high - o.potential_low) * rng.uniform();
    return g;
  };
  const std::size_t horizon = std::max<std::size_t>(o.horizon, 1);
  std::vector<Matrix> ms;
  for (std::size_t n = 0; n < (o.homogeneous_transition ? 1 : horizon); ++n) ms.push_back(draw_transition());
  std::vector<Vector> gs;
  for (std::size_t n = 0; n < (o.homogeneous_potential ? 1 : horizon); ++n) gs.push_back(draw_potential());
  Vector mu(k);
  for (Eigen::Index i = 0; i < k; ++i) mu[i] = rng.uniform() + 0.05;
  mu /= mu.sum();
  Vector v(k);
  for (Eigen::Index i = 0; i < k; ++i) v[i] = 1.0 + (o.lyapunov_high - 1.0) * rng.uniform();
  return build_finite_model(std::move(ms), std::move(gs), std::move(mu), std::move(v));
}

FiniteModel two_state_model(double g0, double g1) {
  Matrix m(2, 2);
  m << 0.9, 0.1, 0.2, 0.8;
  return build_finite_model({m}, {Vector{{g0, g1}}}, Vector{{0.5, 0.5}}, Vector{{1.0, 2.0}});
}

}  // namespace fkstab
