#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fkstab/finite_model.hpp"
#include "fkstab/fit.hpp"

namespace fkstab {

/// Exact prediction flow: η_0..η_n, λ_0..λ_{n-1}, log γ_0(1)..log γ_n(1).
struct FKTrajectory {
  std::vector<Vector> etas;
  std::vector<double> lambdas;
  std::vector<double> log_lambdas;
  std::vector<double> log_gamma;
  std::size_t horizon = 0;
};

FKTrajectory exact_filter(const FiniteModel& model, std::size_t n);
/// Same flow started from another initial law.
FKTrajectory exact_filter(const FiniteModel& model, const Vector& initial, std::size_t n);

/// Q_{p,n} = Q_{p+1}...Q_n, identity for p = n and p = n + 1.
Matrix semigroup_matrix(const FiniteModel& model, std::size_t p, std::size_t n);
/// Q_{p,n} / prod_{q=p}^{n-1} λ_q, accumulated factor by factor.
Matrix normalized_semigroup(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n);

/// h_{p,n} for p = 0..n (row p) and ∥h_{p,n}∥_v when V is present.
struct SpectralObjects {
  Matrix h;
  std::vector<double> v_norms;
  std::size_t horizon = 0;
};

SpectralObjects h_functions(const FiniteModel& model, const FKTrajectory& traj, std::size_t n);
Vector h_function(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n);

/// Constants of (H1)/(H3) at one level d, as consumed by the S-kernel drift.
struct DriftConstants {
  double delta = 0.0;
  double level = 0.0;
  double b = 0.0;
  double eps_minus = 0.0;
  Vector nu;
};

struct TwistedKernel {
  Matrix s;
  Vector v_twist;       // v_{p,n}
  Vector v_twist_prev;  // v_{p-1,n}
  std::optional<double> rho;
  std::optional<double> bound;
  double max_violation = 0.0;  // max_x of S(v_{p,n}) - ρ v_{p-1,n} - B 1_C
  bool drift_holds = true;
};

/// S_{p,n} for 1 <= p <= n, with the drift inequality checked when
/// constants are supplied. Needs V for v_twist.
TwistedKernel twisted_kernel(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n,
                             const std::optional<DriftConstants>& constants = std::nullopt);

/// Both sides of the change-of-measure identity for a terminal test
/// function, one entry per starting state.
struct ChangeOfMeasure {
  Vector lhs;
  Vector rhs;
};
ChangeOfMeasure change_of_measure(const FiniteModel& model, const FKTrajectory& traj, std::size_t p, std::size_t n,
                                  const Vector& phi);

/// Σ_x |m(x)| v(x), the dual v-norm of a signed measure.
double vnorm_measure(const Vector& m, const Vector& v);
/// max_x |f(x)| / v(x).
double vnorm_function(const Vector& f, const Vector& v);
/// v = exp(V) of the model's Lyapunov vector, or ones when absent.
Vector drift_weight(const FiniteModel& model);

struct DecayProfile {
  std::vector<std::pair<std::size_t, double>> samples;  // (lag n - p, e_lag)
  std::optional<FitReport> fit;
  std::string note;
};

/// e_{n-p} = max_x |Q_{p,n}φ/∏λ - h_{p,n} η_n(φ)| / v for p in [p_first, p_last].
DecayProfile met_error_profile(const FiniteModel& model, const FKTrajectory& traj, const Vector& phi,
                               std::size_t p_first, std::size_t p_last, std::size_t n);

/// ∥η_n^{μ} - η_n^{μ'}∥_v for each n in n_list.
std::vector<std::pair<std::size_t, double>> vnorm_distance(const FiniteModel& model, const Vector& mu_prime,
                                                           std::span<const std::size_t> n_list);

double asymptotic_variance(const FiniteModel& model, const FKTrajectory& traj, const Vector& phi, std::size_t n);
/// σ_n² for n = 0..n_max from one filter pass.
std::vector<double> asymptotic_variance_sequence(const FiniteModel& model, const Vector& phi, std::size_t n_max);

inline constexpr std::size_t kRelvarHorizonCap = 14;

struct RelVarExpansion {
  std::size_t n = 0;
  std::size_t particles = 0;
  std::map<std::vector<std::size_t>, double> upsilons;
  double total = 0.0;
};

/// Exact E[(γ_n^N(1)/γ_n(1) - 1)²] by enumeration of all index tuples.
RelVarExpansion relvar_expansion(const FiniteModel& model, std::size_t particles, std::size_t n);
std::string tuple_key(const std::vector<std::size_t>& tuple);

struct ExpMomentResult {
  double ratio = 1.0;       // E[∏G exp(Σ|F_k(X_k)|)] / E[∏G]
  double reference = 0.0;   // μ(v) ∏_k ∥exp|F_k|∥_{v^δ}
  double normalizer = 1.0;  // ∏_k ∥exp|F_k|∥_{v^δ}
};

/// F[j] is the function evaluated at time tuple[j].
ExpMomentResult exp_moment_ratio(const FiniteModel& model, std::span<const Vector> f,
                                 std::span<const std::size_t> tuple, std::size_t n, double delta);

/// The three uniform controls: η_n(v), λ_n and ∥h_{p,n}∥_v.
struct UniformControls {
  std::vector<double> eta_v;
  std::vector<double> lambdas;
  double max_h_vnorm = 0.0;
  double first_half_max = 0.0;
  double second_half_max = 0.0;
};
UniformControls uniform_controls(const FiniteModel& model, std::size_t n_max);

/// Every strictly increasing tuple of size s drawn from 0..n.
std::vector<std::vector<std::size_t>> index_tuples(std::size_t n, std::size_t s);

}  // namespace fkstab
