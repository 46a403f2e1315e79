#include "fkstab/finite_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fkstab/error.hpp"

namespace fkstab {
namespace {

template <class... Parts>
[[noreturn]] void reject(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ValidationError(os.str());
}

void require_traj(const FKTrajectory& traj, std::size_t n) {
  if (traj.horizon < n) reject("trajectory horizon ", traj.horizon, " is shorter than n = ", n);
}

// Backward pass u_p = Q_{p+1}(u_{p+1}) / λ_p from u_n = terminal.
std::vector<Vector> backward_normalized(const FiniteModel& model, const FKTrajectory& traj, const Vector& terminal,
                                        std::size_t n) {
  std::vector<Vector> u(n + 1);
  u[n] = terminal;
  for (std::size_t p = n; p-- > 0;) {
    u[p] = (model.transition(p + 1) * u[p + 1]).cwiseProduct(model.potential(p)) / traj.lambdas[p];
  }
  return u;
}

// H[j][i] = h_{i,j} for 0 <= i <= j <= n.
std::vector<std::vector<Vector>> h_table(const FiniteModel& model, const FKTrajectory& traj, std::size_t n) {
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(model.size()));
  std::vector<std::vector<Vector>> table(n + 1);
  for (std::size_t j = 0; j <= n; ++j) table[j] = backward_normalized(model, traj, ones, j);
  return table;
}

}  // namespace

FKTrajectory exact_filter(const FiniteModel& model, std::size_t n) { return exact_filter(model, model.initial(), n); }

FKTrajectory exact_filter(const FiniteModel& model, const Vector& initial, std::size_t n) {
  model.require_horizon(n);
  if (static_cast<std::size_t>(initial.size()) != model.size()) reject("initial law has the wrong length");
  FKTrajectory traj;
  traj.horizon = n;
  traj.etas.reserve(n + 1);
  traj.etas.push_back(initial);
  traj.log_gamma.push_back(0.0);
  for (std::size_t p = 0; p < n; ++p) {
    const Vector& lg = model.log_potential(p);
    const double shift = lg.maxCoeff();
    const Vector w = traj.etas[p].cwiseProduct((lg.array() - shift).exp().matrix());
    const double mass = w.sum();
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      std::ostringstream os;
      os << "η_" << p << "(G_" << p << ") underflowed (max log-potential " << shift << ")";
      throw NumericalError(os.str());
    }
    const double log_lambda = shift + std::log(mass);
    traj.log_lambdas.push_back(log_lambda);
    traj.lambdas.push_back(std::exp(log_lambda));
    Vector next = model.transition(p + 1).transpose() * (w / mass);
    next /= next.sum();
    traj.etas.push_back(std::move(next));
    traj.log_gamma.push_back(traj.log_gamma.back() + log_lambda);
  }
  return traj;
}

Matrix semigroup_matrix(const FiniteModel& model, std::size_t p, std::size_t n) {
  if (p > n + 1) reject("semigroup Q_{p,n} needs p <= n + 1, got p = ", p, ", n = ", n);
  const auto k = static_cast<Eigen::Index>(model.size());
  Matrix q = Matrix::Identity(k, k);
  for (std::size_t r = p + 1; r <= n; ++r) q = q * model.q_matrix(r);
  return q;
}

Matrix normalized_semigroup(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n) {
  if (p > n + 1) reject("semigroup Q_{p,n} needs p <= n + 1, got p = ", p, ", n = ", n);
  require_traj(traj, n);
  const auto k = static_cast<Eigen::Index>(model.size());
  Matrix q = Matrix::Identity(k, k);
  for (std::size_t r = p + 1; r <= n; ++r) q = q * model.q_matrix(r) / traj.lambdas[r - 1];
  return q;
}

Vector drift_weight(const FiniteModel& model) {
  if (!model.lyapunov()) return Vector::Ones(static_cast<Eigen::Index>(model.size()));
  return model.lyapunov()->array().exp().matrix();
}

double vnorm_measure(const Vector& m, const Vector& v) { return m.cwiseAbs().cwiseProduct(v).sum(); }

double vnorm_function(const Vector& f, const Vector& v) { return f.cwiseAbs().cwiseQuotient(v).maxCoeff(); }

SpectralObjects h_functions(const FiniteModel& model, const FKTrajectory& traj, std::size_t n) {
  require_traj(traj, n);
  const auto h = backward_normalized(model, traj, Vector::Ones(static_cast<Eigen::Index>(model.size())), n);
  SpectralObjects out;
  out.horizon = n;
  out.h.resize(static_cast<Eigen::Index>(n + 1), static_cast<Eigen::Index>(model.size()));
  for (std::size_t p = 0; p <= n; ++p) out.h.row(static_cast<Eigen::Index>(p)) = h[p].transpose();
  if (model.lyapunov()) {
    const Vector v = drift_weight(model);
    for (std::size_t p = 0; p <= n; ++p) out.v_norms.push_back(vnorm_function(h[p], v));
  }
  return out;
}

Vector h_function(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n) {
  if (p > n) reject("h_{p,n} needs p <= n");
  return h_functions(model, traj, n).h.row(static_cast<Eigen::Index>(p)).transpose();
}

TwistedKernel twisted_kernel(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n,
                             const std::optional<DriftConstants>& constants) {
  if (p < 1 || p > n) reject("S_{p,n} needs 1 <= p <= n, got p = ", p, ", n = ", n);
  require_traj(traj, n);
  const auto spec = h_functions(model, traj, n);
  const Vector h_p = spec.h.row(static_cast<Eigen::Index>(p)).transpose();
  const Vector h_prev = spec.h.row(static_cast<Eigen::Index>(p - 1)).transpose();
  const double lambda = traj.lambdas[p - 1];

  TwistedKernel out;
  out.s = model.potential(p - 1).asDiagonal() * model.transition(p) * h_p.asDiagonal();
  for (Eigen::Index x = 0; x < out.s.rows(); ++x) out.s.row(x) /= lambda * h_prev[x];

  if (model.lyapunov()) {
    const Vector v = drift_weight(model);
    out.v_twist = v.cwiseQuotient(h_p) * spec.v_norms[p];
    out.v_twist_prev = v.cwiseQuotient(h_prev) * spec.v_norms[p - 1];
  }
  if (constants) {
    if (!model.lyapunov()) reject("drift constants need a lyapunov vector");
    const Vector& lyap = *model.lyapunov();
    const auto k = lyap.size();
    if (constants->nu.size() != k) reject("ν has the wrong length");
    Vector in_c = Vector::Zero(k);
    for (Eigen::Index x = 0; x < k; ++x)
      if (lyap[x] <= constants->level) in_c[x] = 1.0;
    if (in_c.sum() == 0.0) reject("C_d is empty at level d = ", constants->level);
    const double nu_h = constants->nu.cwiseProduct(in_c).dot(h_p);
    if (!(nu_h > 0.0)) reject("ν_d(1_{C_d} h_{p,n}) = 0 at level d = ", constants->level);
    const double d = constants->level;
    const double delta = constants->delta;
    out.rho = std::exp(-delta * d) / lambda * spec.v_norms[p] / spec.v_norms[p - 1];
    out.bound = std::exp(d * (1.0 - delta) + constants->b) / constants->eps_minus * spec.v_norms[p] / nu_h;
    const Vector lhs = out.s * out.v_twist;
    const Vector rhs = *out.rho * out.v_twist_prev + *out.bound * in_c;
    out.max_violation = (lhs - rhs).maxCoeff();
    out.drift_holds = out.max_violation <= 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff());
  }
  return out;
}

ChangeOfMeasure change_of_measure(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n,
                                  const Vector& phi) {
  if (p >= n) reject("change of measure needs p < n");
  require_traj(traj, n);
  const Matrix q = semigroup_matrix(model, p, n);
  const double denom = traj.etas[p].dot(q * Vector::Ones(q.cols()));
  ChangeOfMeasure out;
  out.lhs = q * phi / denom;
  Vector twisted = phi;
  for (std::size_t r = n; r > p; --r) twisted = twisted_kernel(model, traj, r, n).s * twisted;
  out.rhs = h_function(model, traj, p, n).cwiseProduct(twisted);
  return out;
}

DecayProfile met_error_profile(const FiniteModel& model, const FKTrajectory& traj, const Vector& phi,
                               std::size_t p_first, std::size_t p_last, std::size_t n) {
  if (p_first > p_last || p_last > n) reject("met profile needs p_first <= p_last <= n");
  if (static_cast<std::size_t>(phi.size()) != model.size()) reject("φ has the wrong length");
  require_traj(traj, n);
  const auto k = static_cast<Eigen::Index>(model.size());
  const auto u = backward_normalized(model, traj, phi, n);
  const auto h = backward_normalized(model, traj, Vector::Ones(k), n);
  const Vector v = drift_weight(model);
  const double eta_phi = traj.etas[n].dot(phi);
  DecayProfile out;
  for (std::size_t p = p_last + 1; p-- > p_first;) {
    const double e = vnorm_function(u[p] - h[p] * eta_phi, v);
    out.samples.emplace_back(n - p, e);
  }
  std::vector<double> lags, errs;
  for (const auto& [lag, e] : out.samples) {
    lags.push_back(static_cast<double>(lag));
    errs.push_back(e);
  }
  try {
    out.fit = fit_geometric(lags, errs, FitMode::log_linear);
  } catch (const ValidationError& e) {
    out.note = std::string("no fit: ") + e.what();
  }
  return out;
}

std::vector<std::pair<std::size_t, double>> vnorm_distance(const FiniteModel& model, const Vector& mu_prime,
                                                           std::span<const std::size_t> n_list) {
  if (static_cast<std::size_t>(mu_prime.size()) != model.size()) reject("μ' has the wrong length");
  if (std::abs(mu_prime.sum() - 1.0) > 1e-12 || mu_prime.minCoeff() < 0.0) reject("μ' is not a probability vector");
  std::size_t n_max = 0;
  for (std::size_t n : n_list) n_max = std::max(n_max, n);
  const auto a = exact_filter(model, n_max);
  const auto b = exact_filter(model, mu_prime, n_max);
  const Vector v = drift_weight(model);
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t n : n_list) out.emplace_back(n, vnorm_measure(a.etas[n] - b.etas[n], v));
  return out;
}

double asymptotic_variance(const FiniteModel& model, const FKTrajectory& traj, const Vector& phi, std::size_t n) {
  require_traj(traj, n);
  if (static_cast<std::size_t>(phi.size()) != model.size()) reject("φ has the wrong length");
  const auto k = static_cast<Eigen::Index>(model.size());
  const double eta_phi = traj.etas[n].dot(phi);
  double sigma2 = traj.etas[n].dot((phi.array() - eta_phi).square().matrix());
  const auto u = backward_normalized(model, traj, phi, n);
  const auto h = backward_normalized(model, traj, Vector::Ones(k), n);
  for (std::size_t p = 0; p < n; ++p) sigma2 += traj.etas[p].dot((u[p] - h[p] * eta_phi).array().square().matrix());
  return sigma2;
}

std::vector<double> asymptotic_variance_sequence(const FiniteModel& model, const Vector& phi, std::size_t n_max) {
  const auto traj = exact_filter(model, n_max);
  std::vector<double> out;
  out.reserve(n_max + 1);
  for (std::size_t n = 0; n <= n_max; ++n) out.push_back(asymptotic_variance(model, traj, phi, n));
  return out;
}

std::vector<std::vector<std::size_t>> index_tuples(std::size_t n, std::size_t s) {
  std::vector<std::vector<std::size_t>> out;
  if (s == 0) {
    out.emplace_back();
    return out;
  }
  if (s > n + 1) return out;
  std::vector<std::size_t> t(s);
  for (std::size_t i = 0; i < s; ++i) t[i] = i;
  for (;;) {
    out.push_back(t);
    std::size_t i = s;
    while (i > 0 && t[i - 1] == n + 1 - s + (i - 1)) --i;
    if (i == 0) return out;
    ++t[i - 1];
    for (std::size_t j = i; j < s; ++j) t[j] = t[j - 1] + 1;
  }
}

std::string tuple_key(const std::vector<std::size_t>& tuple) {
  std::string key;
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    if (i) key += '-';
    key += std::to_string(tuple[i]);
  }
  return key;
}

RelVarExpansion relvar_expansion(const FiniteModel& model, std::size_t particles, std::size_t n) {
  if (n > kRelvarHorizonCap)
    reject("relvar_expansion enumerates 2^(n+1) tuples and is capped at n = ", kRelvarHorizonCap,
           "; use the Monte Carlo relvar experiment for n = ", n);
  if (particles < 2) reject("relvar_expansion needs N >= 2");
  const auto traj = exact_filter(model, n);
  const auto h = h_table(model, traj, n);
  const double big_n = static_cast<double>(particles);

  RelVarExpansion out;
  out.n = n;
  out.particles = particles;
  std::vector<double> by_size(n + 2, 0.0);
  std::vector<Vector> potentials(n);
  for (std::size_t p = 0; p < n; ++p) potentials[p] = model.potential(p);
  const std::size_t subsets = std::size_t{1} << (n + 1);
  std::vector<std::size_t> tuple;
  for (std::size_t mask = 1; mask < subsets; ++mask) {
    tuple.clear();
    for (std::size_t p = 0; p <= n; ++p)
      if (mask >> p & 1U) tuple.push_back(p);
    Vector f = traj.etas[0];
    std::size_t j = 0;
    for (std::size_t p = 0;; ++p) {
      if (j < tuple.size() && tuple[j] == p) {
        const std::size_t next = j + 1 < tuple.size() ? tuple[j + 1] : n;
        f = f.cwiseProduct(h[next][p]);
        ++j;
      }
      if (p == n) break;
      f = model.transition(p + 1).transpose() * f.cwiseProduct(potentials[p]) / traj.lambdas[p];
    }
    const double upsilon = f.sum();
    by_size[tuple.size()] += upsilon - 1.0;
    out.upsilons.emplace(tuple, upsilon);
  }
  for (std::size_t s = 1; s <= n + 1; ++s)
    out.total += std::pow(1.0 - 1.0 / big_n, static_cast<double>(n + 1 - s)) * std::pow(big_n, -static_cast<double>(s)) *
                 by_size[s];
  return out;
}

ExpMomentResult exp_moment_ratio(const FiniteModel& model, std::span<const Vector> f,
                                 std::span<const std::size_t> tuple, std::size_t n, double delta) {
  if (!model.lyapunov()) reject("exp_moment_ratio needs a lyapunov vector");
  if (!(delta > 0.0 && delta < 1.0)) reject("δ must lie in (0, 1)");
  if (!tuple.empty() && f.size() != tuple.size() && f.size() != 1)
    reject("exp_moment_ratio needs one F per tuple entry (or a single shared F)");
  for (std::size_t j = 0; j < tuple.size(); ++j) {
    if (tuple[j] > n) reject("tuple entry ", tuple[j], " exceeds n = ", n);
    if (j > 0 && tuple[j] <= tuple[j - 1]) reject("index tuple must be strictly increasing");
  }
  const auto traj = exact_filter(model, n);
  const Vector& lyap = *model.lyapunov();
  const Vector v_delta = (delta * lyap.array()).exp().matrix();
  auto f_at = [&](std::size_t j) -> const Vector& { return f.size() == 1 ? f[0] : f[j]; };

  ExpMomentResult out;
  Vector w = traj.etas[0];
  std::size_t j = 0;
  for (std::size_t p = 0;; ++p) {
    if (j < tuple.size() && tuple[j] == p) {
      const Vector e = f_at(j).cwiseAbs().array().exp().matrix();
      w = w.cwiseProduct(e);
      out.normalizer *= vnorm_function(e, v_delta);
      ++j;
    }
    if (p == n) break;
    w = model.transition(p + 1).transpose() * w.cwiseProduct(model.potential(p)) / traj.lambdas[p];
  }
  out.ratio = w.sum();
  out.reference = model.initial().dot(drift_weight(model)) * out.normalizer;
  return out;
}

UniformControls uniform_controls(const FiniteModel& model, std::size_t n_max) {
  if (!model.lyapunov()) reject("uniform controls need a lyapunov vector");
  const auto traj = exact_filter(model, n_max);
  const Vector v = drift_weight(model);
  const auto k = static_cast<Eigen::Index>(model.size());
  UniformControls out;
  for (std::size_t n = 0; n <= n_max; ++n) out.eta_v.push_back(traj.etas[n].dot(v));
  out.lambdas = traj.lambdas;
  for (std::size_t n = 0; n <= n_max; ++n) {
    const auto h = backward_normalized(model, traj, Vector::Ones(k), n);
    for (const auto& hp : h) out.max_h_vnorm = std::max(out.max_h_vnorm, vnorm_function(hp, v));
  }
  const std::size_t half = n_max / 2;
  for (std::size_t n = 1; n <= n_max; ++n) {
    double& slot = n <= half ? out.first_half_max : out.second_half_max;
    slot = std::max(slot, out.eta_v[n]);
  }
  return out;
}

}  // namespace fkstab
