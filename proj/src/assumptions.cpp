#include "fkstab/assumptions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fkstab/error.hpp"
#include "fkstab/gaussian.hpp"
#include "fkstab/model_io.hpp"

namespace fkstab {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kWindowSds = 10.0;
constexpr double kTailFraction = 0.01;
constexpr double kRobustTolerance = 0.01;
constexpr double kDivergenceNats = 1.0;
constexpr double kProbeRadii[] = {5.0, 10.0, 20.0, 40.0, 80.0};
constexpr std::size_t kProbesPerDim = 33;

template <class... Parts>
[[noreturn]] void reject(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ValidationError(os.str());
}

std::string describe(const Witness& w) {
  std::ostringstream os;
  os << w.condition << " fails at x = [";
  for (std::size_t i = 0; i < w.x.size(); ++i) os << (i ? ", " : "") << w.x[i];
  os << "]";
  if (w.y) {
    os << ", y = [";
    for (std::size_t i = 0; i < w.y->size(); ++i) os << (i ? ", " : "") << (*w.y)[i];
    os << "]";
  }
  os << ", step " << w.step << ": " << w.lhs << " > " << w.rhs;
  return os.str();
}

void require_delta(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) reject("δ must lie in (0, 1), got ", delta);
}

void require_levels(std::span<const double> levels) {
  if (levels.empty()) reject("at least one level d is required");
  for (std::size_t i = 1; i < levels.size(); ++i)
    if (!(levels[i] > levels[i - 1])) reject("levels must be strictly increasing");
}

// d̲ is the smallest listed level from which every larger level certifies.
void finalize(DriftCertificate& cert) {
  cert.d_underline.reset();
  for (std::size_t i = cert.levels.size(); i-- > 0;) {
    if (!cert.levels[i].certified) break;
    cert.d_underline = cert.levels[i].level;
  }
  cert.failed_conditions.clear();
  cert.witness.reset();
  if (cert.d_underline) {
    cert.status = CertificateStatus::certified;
    return;
  }
  const LevelResult& top = cert.levels.back();
  const bool definite = !top.drift_ok || !top.accessible || !top.minorization_ok || !top.majorization_ok;
  cert.status = definite ? CertificateStatus::violated : CertificateStatus::inconclusive;
  cert.failed_conditions = top.failures;
  cert.witness = top.witness;
}

template <class Check>
DriftCertificate scan_delta(std::optional<double> delta, Check&& check) {
  if (delta) return check(*delta);
  std::optional<DriftCertificate> last;
  std::vector<double> tried;
  for (double d : kDeltaScan) {
    tried.push_back(d);
    DriftCertificate cert = check(d);
    cert.delta_scan = tried;
    if (cert.status == CertificateStatus::certified) return cert;
    last = std::move(cert);
  }
  return *last;
}

}  // namespace

const char* to_string(CertificateStatus status) {
  switch (status) {
    case CertificateStatus::certified: return "certified";
    case CertificateStatus::violated: return "violated";
    case CertificateStatus::inconclusive: return "inconclusive";
  }
  return "?";
}

double LevelResult::eps_minus() const { return std::exp(log_eps_minus); }
double LevelResult::eps_plus() const { return std::exp(log_eps_plus); }

const LevelResult& DriftCertificate::level(double d) const {
  for (const auto& l : levels)
    if (l.level == d) return l;
  reject("level ", d, " is not part of the certificate");
}

// ---------------------------------------------------------------- finite

DriftCertificate check_finite_drift(const FiniteModel& model, std::optional<double> delta,
                                    std::span<const double> levels, const FiniteDriftOptions& options) {
  if (delta) require_delta(*delta);
  require_levels(levels);
  Vector lyap;
  if (options.lyapunov) {
    lyap = *options.lyapunov;
    if (static_cast<std::size_t>(lyap.size()) != model.size()) reject("lyapunov override has the wrong length");
    if (lyap.minCoeff() < 0.0) reject("lyapunov override must be non-negative");
  } else {
    if (!model.lyapunov()) reject("check_finite_drift needs a lyapunov vector on the model");
    lyap = *model.lyapunov();
  }
  for (double d : levels)
    if (d < lyap.minCoeff()) reject("C_d is empty at level d = ", d, " (min V = ", lyap.minCoeff(), ")");
  if (options.nu) {
    const Vector& nu = *options.nu;
    if (static_cast<std::size_t>(nu.size()) != model.size() || nu.minCoeff() < 0.0 || std::abs(nu.sum() - 1.0) > 1e-12)
      reject("ν must be a probability vector over the states");
  }

  const auto k = lyap.size();
  const std::size_t steps = model.horizon_limit().value_or(std::max(model.transition_count(), model.potential_count()));
  // log Q_n(e^V)(x) for every probed step, computed with a shift by max V.
  std::vector<Vector> log_qv(steps);
  const double v_shift = lyap.maxCoeff();
  const Vector ev = (lyap.array() - v_shift).exp().matrix();
  for (std::size_t n = 1; n <= steps; ++n)
    log_qv[n - 1] = model.log_potential(n - 1) + ((model.transition(n) * ev).array().log() + v_shift).matrix();

  double g_bar = -kInf;
  for (std::size_t n = 0; n < steps; ++n) g_bar = std::max(g_bar, model.log_potential(n).maxCoeff());

  auto run = [&](double dlt) {
    DriftCertificate cert;
    cert.domain = "finite";
    cert.delta = dlt;
    cert.lyapunov = lyap;
    cert.lyapunov_description = options.lyapunov ? "user-supplied V vector" : "model V vector";
    cert.y_star = ObservationConstraint::all("finite model potentials");
    cert.mu_v = model.initial().dot(lyap.array().exp().matrix());
    cert.g_bar = std::exp(g_bar);
    cert.description = "exact check over " + std::to_string(steps) + " step(s) and " + std::to_string(k) + " states";
    for (double d : levels) {
      LevelResult lr;
      lr.level = d;
      Vector in_c = Vector::Zero(k);
      for (Eigen::Index x = 0; x < k; ++x)
        if (lyap[x] <= d) in_c[x] = 1.0;
      lr.set_size = in_c.sum();
      lr.nu = options.nu ? *options.nu : Vector(in_c / lr.set_size);
      lr.drift_ok = true;
      lr.accessible = true;
      lr.b = -kInf;
      double worst = -kInf;
      for (std::size_t n = 1; n <= steps; ++n) {
        for (Eigen::Index x = 0; x < k; ++x) {
          const double rhs = lyap[x] * (1.0 - dlt);
          if (in_c[x] > 0.0) {
            lr.b = std::max(lr.b, log_qv[n - 1][x] - rhs);
          } else {
            const double excess = log_qv[n - 1][x] - rhs;
            if (excess > 1e-12 * std::max(1.0, std::abs(rhs)) && excess > worst) {
              worst = excess;
              lr.drift_ok = false;
              lr.witness = Witness{"H1-drift", {static_cast<double>(x)}, std::nullopt, n, log_qv[n - 1][x], rhs};
            }
          }
        }
      }
      if (!lr.drift_ok) lr.failures.push_back("H1-drift");

      double lo = kInf, hi = -kInf;
      bool unbounded = false;
      for (std::size_t n = 1; n <= steps && !unbounded; ++n) {
        const Matrix q = model.q_matrix(n);
        for (Eigen::Index x = 0; x < k; ++x) {
          if (q.row(x).dot(in_c) <= 0.0 && lr.accessible) {
            lr.accessible = false;
            lr.witness = Witness{"H3-accessibility", {static_cast<double>(x)}, std::nullopt, n, 0.0, 0.0};
          }
          if (in_c[x] == 0.0) continue;
          for (Eigen::Index xp = 0; xp < k; ++xp) {
            if (in_c[xp] == 0.0) continue;
            if (lr.nu[xp] > 0.0) {
              const double ratio = q(x, xp) / lr.nu[xp];
              lo = std::min(lo, ratio);
              hi = std::max(hi, ratio);
            } else if (q(x, xp) > 0.0) {
              unbounded = true;
            }
          }
        }
      }
      if (!(lr.nu.dot(in_c) > 0.0)) {
        lo = 0.0;
        unbounded = true;
      }
      lr.log_eps_minus = std::log(lo);
      lr.log_eps_plus = unbounded ? kInf : std::log(hi);
      lr.minorization_ok = lo > 0.0 && std::isfinite(lr.log_eps_minus);
      lr.majorization_ok = !unbounded && std::isfinite(lr.log_eps_plus);
      if (!lr.accessible) lr.failures.push_back("H3-accessibility");
      if (!lr.minorization_ok) {
        lr.failures.push_back("H3-minorization");
        if (!lr.witness) lr.witness = Witness{"H3-minorization", {}, std::nullopt, 0, 0.0, lr.log_eps_minus};
      }
      if (!lr.majorization_ok) lr.failures.push_back("H4-majorization");
      lr.certified = lr.drift_ok && lr.accessible && lr.minorization_ok && lr.majorization_ok;
      cert.levels.push_back(std::move(lr));
    }
    finalize(cert);
    if (cert.witness) cert.description += "; " + describe(*cert.witness);
    return cert;
  };
  return scan_delta(delta, run);
}

// ---------------------------------------------------------------- grid

namespace {

double level_radius(const LyapunovSpec& v, double d) {
  if (d < 1.0) reject("C_d is empty at level d = ", d, " (V >= 1)");
  if (v.kind == LyapunovSpec::Kind::abs_linear) return (d - 1.0) / v.c;
  return std::sqrt((d - 1.0) / v.quadratic_coefficient());
}

double lyapunov_at(const LyapunovSpec& v, double x) { return v(std::span<const double>(&x, 1)); }

// Composite rule on [a, b] of exp(log_f), returned in logs.
template <class LogF>
double log_quadrature(double a, double b, std::size_t points, QuadratureRule rule, LogF&& log_f) {
  if (!(b > a)) return -kInf;
  std::size_t m = std::max<std::size_t>(points, 3);
  if (rule == QuadratureRule::simpson && m % 2 == 0) ++m;
  const double h = (b - a) / static_cast<double>(m - 1);
  std::vector<double> logs(m);
  double shift = -kInf;
  for (std::size_t i = 0; i < m; ++i) {
    logs[i] = log_f(a + h * static_cast<double>(i));
    shift = std::max(shift, logs[i]);
  }
  if (!std::isfinite(shift)) return shift;
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double w;
    if (rule == QuadratureRule::simpson) w = (i == 0 || i + 1 == m) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    else w = (i == 0 || i + 1 == m) ? 0.5 : 1.0;
    s += w * std::exp(logs[i] - shift);
  }
  if (rule == QuadratureRule::simpson) s /= 3.0;
  return shift + std::log(s * h);
}

double log_closed_form(double m, double s, const LyapunovSpec& v, double a, double b) {
  if (v.kind == LyapunovSpec::Kind::abs_linear) return log_gaussian_exp_abs_linear(m, s, v.c, a, b);
  return log_gaussian_exp_quadratic(m, s, v.quadratic_coefficient(), a, b);
}

}  // namespace

DriftIntegral drift_integral(double mean, double sd, const LyapunovSpec& v, std::size_t points, QuadratureRule rule) {
  DriftIntegral out;
  double lo, hi;
  if (v.kind == LyapunovSpec::Kind::abs_linear) {
    const double w = v.c * sd * sd + kWindowSds * sd;
    lo = mean - w;
    hi = mean + w;
  } else {
    const double shrink = 1.0 - 2.0 * v.quadratic_coefficient() * sd * sd;
    if (!(shrink > 0.0)) {
      out.log_value = out.log_exact = kInf;
      out.log_tail = kInf;
      return out;
    }
    const double m = mean / shrink;
    const double s = sd / std::sqrt(shrink);
    lo = m - kWindowSds * s;
    hi = m + kWindowSds * s;
  }
  const double var = sd * sd;
  auto log_f = [&](double xp) { return log_normal_pdf(xp, mean, var) + lyapunov_at(v, xp); };
  double window;
  if (v.kind == LyapunovSpec::Kind::abs_linear && lo < 0.0 && hi > 0.0) {
    // Split at the kink of |x|; each piece gets the full node budget.
    window = log_add_exp(log_quadrature(lo, 0.0, points, rule, log_f), log_quadrature(0.0, hi, points, rule, log_f));
  } else {
    window = log_quadrature(lo, hi, points, rule, log_f);
  }
  out.log_tail = log_add_exp(log_closed_form(mean, sd, v, -kInf, lo), log_closed_form(mean, sd, v, hi, kInf));
  out.log_value = log_add_exp(window, out.log_tail);
  out.log_exact = log_closed_form(mean, sd, v, -kInf, kInf);
  return out;
}

std::vector<std::vector<double>> default_probes(const ObservationConstraint& y_star, std::size_t obs_dim) {
  auto linspace = [](double a, double b, std::size_t n) {
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a + (b - a) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
  };
  std::vector<std::vector<double>> probes;
  switch (y_star.kind()) {
    case ObservationConstraint::Kind::finite_set: return y_star.points();
    case ObservationConstraint::Kind::box: {
      std::vector<std::vector<double>> axes;
      for (const auto& [lo, hi] : y_star.bounds()) axes.push_back(lo == hi ? std::vector<double>{lo} : linspace(lo, hi, kProbesPerDim));
      probes.emplace_back();
      for (const auto& axis : axes) {
        std::vector<std::vector<double>> next;
        for (const auto& p : probes)
          for (double v : axis) {
            auto q = p;
            q.push_back(v);
            next.push_back(std::move(q));
          }
        probes = std::move(next);
      }
      return probes;
    }
    case ObservationConstraint::Kind::annulus: {
      if (obs_dim != 1) reject("annulus probes are only generated for one-dimensional observations");
      for (double v : linspace(y_star.lower(), y_star.upper(), kProbesPerDim)) {
        probes.push_back({-v});
        probes.push_back({v});
      }
      return probes;
    }
    case ObservationConstraint::Kind::all: {
      if (obs_dim != 1) reject("expanding probes are only generated for one-dimensional observations");
      std::vector<double> values;
      for (double r : kProbeRadii)
        for (double v : linspace(-r, r, kProbesPerDim)) values.push_back(v);
      std::sort(values.begin(), values.end());
      values.erase(std::unique(values.begin(), values.end()), values.end());
      for (double v : values) probes.push_back({v});
      return probes;
    }
  }
  return probes;
}

namespace {

struct GridContext {
  const HmmModel* model = nullptr;
  LyapunovSpec lyapunov;
  double delta = 0.1;
  GridSpec grid;
  std::vector<std::vector<double>> probes;
  std::vector<double> band_radii;  // nested probe bands; a single infinite band when Y⋆ is compact
  std::vector<std::vector<std::size_t>> band_members;
  bool signal_only = false;
};

struct PointEval {
  double x = 0.0;
  double v = 0.0;
  double mean = 0.0;
  double sd = 1.0;
  double log_sup_g = 0.0;
  std::size_t argmax_probe = 0;
  std::vector<double> band_min;  // min_y log g over each band
  std::vector<double> band_max;
  double log_integral = 0.0;
  bool tail_ok = true;
};

PointEval evaluate_point(const GridContext& ctx, double x, std::size_t points) {
  PointEval pe;
  pe.x = x;
  pe.v = lyapunov_at(ctx.lyapunov, x);
  const auto moments = ctx.model->signal_moments(std::span<const double>(&x, 1));
  pe.mean = moments.mean[0];
  pe.sd = moments.sd;
  const auto integral = drift_integral(pe.mean, pe.sd, ctx.lyapunov, points, ctx.grid.rule);
  pe.log_integral = integral.log_value;
  pe.tail_ok = std::isfinite(integral.log_value) && integral.log_tail - integral.log_value <= std::log(kTailFraction);
  const std::size_t bands = ctx.band_radii.size();
  pe.band_min.assign(bands, kInf);
  pe.band_max.assign(bands, -kInf);
  if (ctx.signal_only) {
    pe.log_sup_g = 0.0;
    pe.band_min.assign(bands, 0.0);
    pe.band_max.assign(bands, 0.0);
    return pe;
  }
  pe.log_sup_g = -kInf;
  std::vector<double> lg(ctx.probes.size());
  for (std::size_t j = 0; j < ctx.probes.size(); ++j) {
    lg[j] = ctx.model->obs_log_likelihood(std::span<const double>(&x, 1), ctx.probes[j]);
    if (lg[j] > pe.log_sup_g) {
      pe.log_sup_g = lg[j];
      pe.argmax_probe = j;
    }
  }
  for (std::size_t b = 0; b < bands; ++b) {
    for (std::size_t j : ctx.band_members[b]) {
      pe.band_min[b] = std::min(pe.band_min[b], lg[j]);
      pe.band_max[b] = std::max(pe.band_max[b], lg[j]);
    }
  }
  return pe;
}

std::vector<LevelResult> evaluate_levels(const GridContext& ctx, std::span<const double> levels, std::size_t points,
                                         double& log_g_bar) {
  const double big_r = ctx.grid.radius;
  std::vector<PointEval> grid;
  grid.reserve(points);
  for (std::size_t i = 0; i < points; ++i)
    grid.push_back(evaluate_point(ctx, -big_r + 2.0 * big_r * static_cast<double>(i) / static_cast<double>(points - 1), points));
  log_g_bar = -kInf;
  for (const auto& pe : grid) log_g_bar = std::max(log_g_bar, pe.log_sup_g);

  std::vector<LevelResult> out;
  for (double d : levels) {
    LevelResult lr;
    lr.level = d;
    const double r = level_radius(ctx.lyapunov, d);
    lr.set_size = 2.0 * r;
    lr.drift_ok = true;
    lr.accessible = true;
    lr.b = -kInf;
    if (r >= big_r) {
      lr.conclusive = false;
      lr.failures.push_back("grid-limited: C_d extends past the grid radius");
    }
    std::vector<PointEval> in_c;
    for (const auto& pe : grid)
      if (std::abs(pe.x) <= r) in_c.push_back(pe);
    if (r > 0.0 && r < big_r) {
      in_c.push_back(evaluate_point(ctx, -r, points));
      in_c.push_back(evaluate_point(ctx, r, points));
    }
    // The sup of the drift excess sits at the kink of |x| for abs-linear V.
    if (r == 0.0 || ctx.lyapunov.kind == LyapunovSpec::Kind::abs_linear) in_c.push_back(evaluate_point(ctx, 0.0, points));

    bool tails_ok = true;
    double worst = -kInf;
    for (const auto& pe : grid) {
      tails_ok = tails_ok && pe.tail_ok;
      const double lhs = pe.log_sup_g + pe.log_integral;
      const double rhs = pe.v * (1.0 - ctx.delta);
      if (std::abs(pe.x) > r) {
        const double excess = lhs - rhs;
        if (excess > 1e-9 * std::max(1.0, std::abs(rhs)) && excess > worst) {
          worst = excess;
          lr.drift_ok = false;
          std::optional<std::vector<double>> y;
          if (!ctx.signal_only) y = ctx.probes[pe.argmax_probe];
          lr.witness = Witness{"H1-drift", {pe.x}, y, 0, lhs, rhs};
        }
      }
      const double log_reach = log_normal_interval((-r - pe.mean) / pe.sd, (r - pe.mean) / pe.sd);
      const double min_g = ctx.signal_only ? 0.0 : pe.band_min.back();
      if ((!std::isfinite(log_reach) || !std::isfinite(min_g)) && lr.accessible) {
        lr.accessible = false;
        if (lr.drift_ok) lr.witness = Witness{"H3-accessibility", {pe.x}, std::nullopt, 0, log_reach, -kInf};
      }
    }
    for (const auto& pe : in_c) {
      tails_ok = tails_ok && pe.tail_ok;
      lr.b = std::max(lr.b, pe.log_sup_g + pe.log_integral - pe.v * (1.0 - ctx.delta));
    }
    if (!tails_ok) {
      lr.conclusive = false;
      lr.failures.push_back("quadrature-tail: truncated mass above 1% of the integral");
    }

    // Minorization / majorization against normalized Lebesgue on C_d. The
    // x' extremes of the Gaussian density over [-r, r] are exact.
    const std::size_t bands = ctx.band_radii.size();
    std::vector<double> lo(bands, kInf), hi(bands, -kInf);
    const double log_size = std::log(std::max(lr.set_size, std::numeric_limits<double>::min()));
    for (const auto& pe : in_c) {
      const double var = pe.sd * pe.sd;
      const double far = std::abs(pe.mean - r) > std::abs(pe.mean + r) ? r : -r;
      const double near = std::clamp(pe.mean, -r, r);
      const double f_min = log_normal_pdf(far, pe.mean, var);
      const double f_max = log_normal_pdf(near, pe.mean, var);
      for (std::size_t b = 0; b < bands; ++b) {
        lo[b] = std::min(lo[b], pe.band_min[b] + f_min + log_size);
        hi[b] = std::max(hi[b], pe.band_max[b] + f_max + log_size);
      }
    }
    lr.log_eps_minus = lo.back();
    lr.log_eps_plus = hi.back();
    lr.minorization_ok = std::isfinite(lr.log_eps_minus) && lr.set_size > 0.0;
    lr.majorization_ok = std::isfinite(lr.log_eps_plus);
    if (bands >= 2) {
      const double drop = lo[bands - 2] - lo[bands - 1];
      if (drop > kDivergenceNats) {
        lr.minorization_ok = false;
        if (lr.drift_ok)
          lr.witness = Witness{"H3-minorization", {}, std::vector<double>{ctx.band_radii.back()}, 0,
                               lo[bands - 2], lo[bands - 1]};
      }
      const double rise = hi[bands - 1] - hi[bands - 2];
      if (rise > kDivergenceNats) lr.majorization_ok = false;
    }
    if (!lr.drift_ok) lr.failures.push_back("H1-drift");
    if (!lr.accessible) lr.failures.push_back("H3-accessibility");
    if (!lr.minorization_ok) lr.failures.push_back("H3-minorization");
    if (!lr.majorization_ok) lr.failures.push_back("H4-majorization");
    lr.certified = lr.drift_ok && lr.accessible && lr.minorization_ok && lr.majorization_ok && lr.conclusive;
    out.push_back(std::move(lr));
  }
  return out;
}

bool close_enough(double a, double b) {
  if (a == b) return true;
  if (!std::isfinite(a) || !std::isfinite(b)) return false;
  return std::abs(a - b) <= kRobustTolerance * std::max(1.0, std::abs(a));
}

DriftCertificate grid_certificate(GridContext ctx, std::span<const double> levels, const std::string& domain) {
  double log_g_bar = 0.0;
  auto coarse = evaluate_levels(ctx, levels, ctx.grid.points, log_g_bar);
  double log_g_bar_fine = 0.0;
  const auto fine = evaluate_levels(ctx, levels, 2 * ctx.grid.points, log_g_bar_fine);
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    LevelResult& c = coarse[i];
    const LevelResult& f = fine[i];
    const bool stable = close_enough(c.b, f.b) && close_enough(c.log_eps_minus, f.log_eps_minus) &&
                        close_enough(c.log_eps_plus, f.log_eps_plus) && c.drift_ok == f.drift_ok;
    if (!stable && c.certified) {
      c.conclusive = false;
      c.certified = false;
      c.failures.push_back("grid-robustness: doubling the grid moved a constant by more than 1%");
    }
  }

  DriftCertificate cert;
  cert.domain = domain;
  cert.delta = ctx.delta;
  cert.lyapunov_spec = ctx.lyapunov;
  std::ostringstream vdesc;
  if (ctx.lyapunov.kind == LyapunovSpec::Kind::abs_linear) vdesc << "V(x) = 1 + " << ctx.lyapunov.c << "|x|";
  else vdesc << "V(x) = 1 + x^2/(2(1+" << ctx.lyapunov.delta0 << "))";
  cert.lyapunov_description = vdesc.str();
  cert.levels = std::move(coarse);
  cert.y_star = ctx.model->y_star();
  cert.grid = ctx.grid;
  cert.probes = ctx.probes;
  cert.g_bar = std::exp(log_g_bar);

  const auto& params = ctx.model->params();
  double m0 = 0.0, p0 = 1.0;
  std::visit([&](const auto& p) { m0 = p.m0; p0 = p.p0; }, params);
  cert.mu_v = std::exp(log_closed_form(m0, std::sqrt(p0), ctx.lyapunov, -kInf, kInf));

  finalize(cert);
  std::ostringstream os;
  os << "grid check on [-" << ctx.grid.radius << ", " << ctx.grid.radius << "] with " << ctx.grid.points
     << " points (rechecked with " << 2 * ctx.grid.points << ")";
  if (ctx.signal_only) os << "; signal kernel only";
  else if (ctx.model->y_star().kind() != ObservationConstraint::Kind::finite_set)
    os << "; certified on " << ctx.probes.size() << " probes of Y* (" << ctx.model->y_star().description() << ")";
  else os << "; every point of Y* checked";
  if (cert.witness) os << "; " << describe(*cert.witness);
  cert.description = os.str();
  return cert;
}

void require_grid(const GridSpec& grid) {
  if (!(grid.radius > 0.0)) reject("grid radius must be positive");
  if (grid.points < 64) reject("grid needs at least 64 points");
}

}  // namespace

DriftCertificate check_grid_drift(const HmmModel& model, const LyapunovSpec& lyapunov, std::optional<double> delta,
                                  std::span<const double> levels, const GridSpec& grid,
                                  std::optional<std::vector<std::vector<double>>> probes) {
  if (!model.has_signal_density()) reject("grid check needs a signal density");
  if (model.state_dim() != 1) reject("grid checks support one-dimensional states only");
  if (delta) require_delta(*delta);
  require_levels(levels);
  require_grid(grid);
  if (lyapunov.kind == LyapunovSpec::Kind::abs_linear && !(lyapunov.c > 0.0)) reject("lyapunov c must be positive");
  if (lyapunov.kind == LyapunovSpec::Kind::quadratic && !(lyapunov.delta0 > 0.0)) reject("lyapunov δ0 must be positive");
  for (double d : levels) level_radius(lyapunov, d);

  GridContext ctx;
  ctx.model = &model;
  ctx.lyapunov = lyapunov;
  ctx.grid = grid;
  const bool expanding = !probes && model.y_star().kind() == ObservationConstraint::Kind::all;
  ctx.probes = probes ? *probes : default_probes(model.y_star(), model.obs_dim());
  if (ctx.probes.empty()) reject("probe set is empty");
  for (const auto& y : ctx.probes) {
    if (y.size() != model.obs_dim()) reject("probe has dimension ", y.size(), ", expected ", model.obs_dim());
    if (!model.y_star().contains(y)) reject("probe lies outside Y* (", model.y_star().description(), ")");
  }
  if (expanding) {
    for (double r : kProbeRadii) {
      ctx.band_radii.push_back(r);
      std::vector<std::size_t> members;
      for (std::size_t j = 0; j < ctx.probes.size(); ++j)
        if (std::abs(ctx.probes[j][0]) <= r + 1e-12) members.push_back(j);
      ctx.band_members.push_back(std::move(members));
    }
  } else {
    ctx.band_radii.push_back(kInf);
    std::vector<std::size_t> all(ctx.probes.size());
    for (std::size_t j = 0; j < all.size(); ++j) all[j] = j;
    ctx.band_members.push_back(std::move(all));
  }
  return scan_delta(delta, [&](double dlt) {
    ctx.delta = dlt;
    return grid_certificate(ctx, levels, "grid");
  });
}

DriftCertificate check_signal_drift(const HmmModel& model, double c, std::optional<double> delta,
                                    std::span<const double> levels, const GridSpec& grid) {
  if (!std::holds_alternative<ErgodicDriftParams>(model.params()))
    reject("check_signal_drift needs an ergodic-drift model");
  if (!(c > 0.0)) reject("c must be positive; c = 0 gives V = 1 and a vacuous drift condition");
  if (model.state_dim() != 1) reject("grid checks support one-dimensional states only");
  if (delta) require_delta(*delta);
  require_levels(levels);
  require_grid(grid);
  GridContext ctx;
  ctx.model = &model;
  ctx.lyapunov = LyapunovSpec{LyapunovSpec::Kind::abs_linear, c, 2.0};
  ctx.grid = grid;
  ctx.signal_only = true;
  ctx.band_radii.push_back(kInf);
  ctx.band_members.emplace_back();
  for (double d : levels) level_radius(ctx.lyapunov, d);
  return scan_delta(delta, [&](double dlt) {
    ctx.delta = dlt;
    auto cert = grid_certificate(ctx, levels, "signal");
    cert.y_star = ObservationConstraint::all("not used: signal kernel only");
    cert.g_bar = 1.0;
    return cert;
  });
}

// ---------------------------------------------------------------- transfer

DriftCertificate transfer_drift(const DriftCertificate& cert, double alpha, std::optional<double> g_bar) {
  if (cert.status != CertificateStatus::certified || !cert.d_underline)
    reject("transfer_drift needs a certified certificate, got status ", to_string(cert.status));
  if (!(alpha > 0.0 && alpha < 1.0)) reject("α must lie in (0, 1), got ", alpha);
  if (!g_bar) reject("transfer_drift needs the potential bound ḡ");
  if (!(*g_bar > 0.0) || !std::isfinite(*g_bar)) reject("ḡ must be positive and finite");

  const double delta0 = cert.delta / 2.0;
  const double log_g = std::log(*g_bar);
  DriftCertificate out = cert;
  out.delta = delta0;
  out.lyapunov_scale = cert.lyapunov_scale * alpha;
  out.transfer_alpha = alpha;
  if (cert.lyapunov) out.lyapunov = alpha * *cert.lyapunov;
  out.g_bar = *g_bar;
  out.levels.clear();
  out.delta_scan.clear();
  for (const auto& lr : cert.levels) {
    if (lr.level < *cert.d_underline) continue;
    const double d = lr.level;
    // Off the level set the exponent must absorb (1-α) log ḡ.
    if (alpha * d * (cert.delta - delta0) < (1.0 - alpha) * log_g) continue;
    LevelResult t = lr;
    t.level = alpha * d;
    t.b = alpha * d * (1.0 - cert.delta) + alpha * lr.b + (1.0 - alpha) * log_g;
    out.levels.push_back(std::move(t));
  }
  if (out.levels.empty()) {
    out.status = CertificateStatus::inconclusive;
    out.d_underline.reset();
    out.failed_conditions = {"transfer: no certified level satisfies αd(δ-δ0) >= (1-α)log ḡ"};
    out.description = "transfer to v^" + std::to_string(alpha) + " found no admissible level";
    return out;
  }
  finalize(out);
  std::ostringstream os;
  os << "transferred from " << cert.lyapunov_description << " to v^" << alpha << " with δ0 = δ/2 = " << delta0
     << ", ḡ = " << *g_bar << "; level αd indexes the original C_d";
  out.description = os.str();
  out.lyapunov_description = cert.lyapunov_description + " scaled by " + std::to_string(out.lyapunov_scale);
  return out;
}

DriftConstants drift_constants(const DriftCertificate& cert, double level) {
  if (cert.domain != "finite") reject("drift constants are exposed for finite certificates only");
  const LevelResult& lr = cert.level(level);
  if (!lr.certified) reject("level ", level, " is not certified");
  return DriftConstants{cert.delta, level, lr.b, lr.eps_minus(), lr.nu};
}

// ---------------------------------------------------------------- JSON

nlohmann::json to_json(const GridSpec& grid) {
  return {{"radius", grid.radius},
          {"points", grid.points},
          {"rule", grid.rule == QuadratureRule::simpson ? "simpson" : "trapezoid"}};
}

GridSpec grid_spec_from_json(const nlohmann::json& j) {
  detail::require_known_keys(j, {"radius", "points", "rule"}, "grid");
  GridSpec g;
  g.radius = detail::value_or(j, "radius", g.radius);
  g.points = detail::value_or(j, "points", g.points);
  const auto rule = detail::value_or(j, "rule", std::string("simpson"));
  if (rule == "simpson") g.rule = QuadratureRule::simpson;
  else if (rule == "trapezoid") g.rule = QuadratureRule::trapezoid;
  else reject("unknown quadrature rule '", rule, "'");
  require_grid(g);
  return g;
}

namespace {

nlohmann::json number_or_null(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? nlohmann::json("inf") : nlohmann::json("-inf");
}

nlohmann::json witness_json(const Witness& w) {
  nlohmann::json j{{"condition", w.condition}, {"x", w.x}, {"step", w.step},
                   {"lhs", number_or_null(w.lhs)}, {"rhs", number_or_null(w.rhs)}};
  if (w.y) j["y"] = *w.y;
  return j;
}

}  // namespace

nlohmann::json to_json(const DriftCertificate& cert) {
  nlohmann::json j;
  j["domain"] = cert.domain;
  j["status"] = to_string(cert.status);
  j["lyapunov"] = cert.lyapunov_description;
  if (cert.lyapunov) j["lyapunov_vector"] = vector_to_json(*cert.lyapunov);
  if (cert.lyapunov_spec) j["lyapunov_spec"] = to_json(*cert.lyapunov_spec);
  j["lyapunov_scale"] = cert.lyapunov_scale;
  j["delta"] = cert.delta;
  j["d_underline"] = cert.d_underline ? nlohmann::json(*cert.d_underline) : nlohmann::json(nullptr);
  j["mu_v"] = number_or_null(cert.mu_v);
  j["g_bar"] = number_or_null(cert.g_bar);
  j["y_star"] = to_json(cert.y_star);
  j["description"] = cert.description;
  j["failed_conditions"] = cert.failed_conditions;
  if (cert.witness) j["witness"] = witness_json(*cert.witness);
  if (cert.grid) j["grid"] = to_json(*cert.grid);
  if (!cert.probes.empty()) j["probes"] = cert.probes;
  if (!cert.delta_scan.empty()) j["delta_scan"] = cert.delta_scan;
  if (cert.transfer_alpha) j["transfer_alpha"] = *cert.transfer_alpha;
  j["levels"] = nlohmann::json::array();
  for (const auto& lr : cert.levels) {
    nlohmann::json l{{"d", lr.level},
                     {"certified", lr.certified},
                     {"drift_ok", lr.drift_ok},
                     {"accessible", lr.accessible},
                     {"minorization_ok", lr.minorization_ok},
                     {"majorization_ok", lr.majorization_ok},
                     {"conclusive", lr.conclusive},
                     {"b", number_or_null(lr.b)},
                     {"log_eps_minus", number_or_null(lr.log_eps_minus)},
                     {"log_eps_plus", number_or_null(lr.log_eps_plus)},
                     {"set_size", lr.set_size},
                     {"failures", lr.failures}};
    if (lr.nu.size() > 0) l["nu"] = vector_to_json(lr.nu);
    else l["nu"] = "uniform on C_d";
    if (lr.witness) l["witness"] = witness_json(*lr.witness);
    j["levels"].push_back(std::move(l));
  }
  return j;
}

}  // namespace fkstab
