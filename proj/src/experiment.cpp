#include "fkstab/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "fkstab/error.hpp"
#include "fkstab/finite_oracle.hpp"
#include "fkstab/kalman.hpp"
#include "fkstab/particle_filter.hpp"

namespace fkstab {

using detail::require_key;
using detail::require_object;
using detail::require_known_keys;
using detail::value_or;

namespace {

template <class... Parts>
[[noreturn]] void reject(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw ValidationError(os.str());
}

constexpr std::pair<ExperimentTag, const char*> kTags[] = {
    {ExperimentTag::oracle_identities, "oracle-identities"},
    {ExperimentTag::clt, "clt"},
    {ExperimentTag::relvar, "relvar"},
    {ExperimentTag::forgetting, "forgetting"},
    {ExperimentTag::certify, "certify"},
    {ExperimentTag::pf_run, "pf-run"},
};

CertificateStatus status_from(const std::string& s) {
  if (s == "certified") return CertificateStatus::certified;
  if (s == "violated") return CertificateStatus::violated;
  if (s == "inconclusive") return CertificateStatus::inconclusive;
  reject("unknown certificate status '", s, "'");
}

bool is_finite_model(const ExperimentSpec& spec) {
  return spec.model && std::holds_alternative<FiniteModel>(*spec.model);
}

const FiniteModel& finite_of(const ExperimentSpec& spec) { return std::get<FiniteModel>(*spec.model); }
const ModelParams& params_of(const ExperimentSpec& spec) { return std::get<ModelParams>(*spec.model); }

bool is_linear_gaussian(const ExperimentSpec& spec) {
  return spec.model && !is_finite_model(spec) && std::holds_alternative<LinearGaussianParams>(params_of(spec));
}

std::size_t n_max_of(const ExperimentSpec& spec) {
  std::size_t m = 0;
  for (std::size_t n : spec.engine.n_list) m = std::max(m, n);
  return m;
}

ObservationRecord record_from_json(const json& j, std::string_view context) {
  if (!j.is_array()) reject(context, " must be an array");
  ObservationRecord out;
  for (const auto& item : j) {
    std::vector<double> y;
    if (item.is_number()) y.push_back(item.get<double>());
    else if (item.is_array()) y = item.get<std::vector<double>>();
    else reject(context, " entries must be numbers or arrays of numbers");
    for (double v : y)
      if (!std::isfinite(v)) reject(context, " contains a non-finite value");
    if (!out.empty() && y.size() != out.front().size()) reject(context, " mixes observation dimensions");
    out.push_back(std::move(y));
  }
  return out;
}

ObservationSource source_from_json(const json& j, const std::filesystem::path& base_dir) {
  require_object(j, "observations");
  ObservationSource s;
  const auto kind = require_key(j, "source", "observations").get<std::string>();
  if (kind == "simulate") {
    require_known_keys(j, {"source", "seed", "length", "constrain"}, "observations");
    s.kind = ObservationSource::Kind::simulate;
    s.seed = require_key(j, "seed", "observations").get<std::uint64_t>();
    s.length = value_or<std::size_t>(j, "length", 0);
    s.constrain = value_or(j, "constrain", true);
  } else if (kind == "inline") {
    require_known_keys(j, {"source", "values"}, "observations");
    s.kind = ObservationSource::Kind::inline_values;
    s.values = record_from_json(require_key(j, "values", "observations"), "observations.values");
  } else if (kind == "file") {
    require_known_keys(j, {"source", "path"}, "observations");
    s.kind = ObservationSource::Kind::file;
    std::filesystem::path p = require_key(j, "path", "observations").get<std::string>();
    if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw IoError("observation file " + p.string() + " does not exist");
    s.path = std::filesystem::absolute(p).lexically_normal().string();
  } else {
    reject("unknown observation source '", kind, "' (expected simulate, inline or file)");
  }
  return s;
}


NRule rule_from_json(const json& j) {
  require_known_keys(j, {"kind", "particles", "kappa"}, "engine.n_rule");
  NRule r;
  const auto kind = value_or<std::string>(j, "kind", "fixed");
  if (kind == "fixed") r.kind = NRule::Kind::fixed;
  else if (kind == "proportional") r.kind = NRule::Kind::proportional;
  else reject("unknown N rule '", kind, "'");
  r.particles = value_or(j, "particles", r.particles);
  r.kappa = value_or(j, "kappa", r.kappa);
  if (r.kind == NRule::Kind::fixed && r.particles == 0) reject("engine.n_rule.particles must be at least 1");
  if (!(r.kappa > 0.0)) reject("engine.n_rule.kappa must be positive");
  return r;
}

EngineSpec engine_from_json(const json& j) {
  require_known_keys(j, {"seed", "particles", "n_rule", "n_list", "replicates"}, "engine");
  EngineSpec e;
  const auto seed = j.find("seed");
  if (seed == j.end() || seed->is_null()) reject("engine.seed is mandatory (no wall-clock seeding)");
  e.seed = seed->get<std::uint64_t>();
  if (j.contains("particles") && j.contains("n_rule")) reject("give engine.particles or engine.n_rule, not both");
  if (j.contains("particles")) e.rule.particles = j["particles"].get<std::size_t>();
  if (j.contains("n_rule")) e.rule = rule_from_json(j["n_rule"]);
  if (e.rule.particles == 0) reject("engine.particles must be at least 1");
  if (j.contains("n_list")) e.n_list = j["n_list"].get<std::vector<std::size_t>>();
  if (e.n_list.empty()) reject("engine.n_list must not be empty");
  e.replicates = value_or(j, "replicates", e.replicates);
  return e;
}

CertifySpec certify_from_json(const json& j) {
  require_known_keys(j, {"delta", "levels", "grid", "lyapunov", "lyapunov_vector", "nu", "signal_only", "signal_c",
                         "transfer_alpha", "g_bar", "expect"},
                     "certify");
  CertifySpec c;
  if (j.contains("delta") && !j["delta"].is_null()) c.delta = j["delta"].get<double>();
  if (j.contains("levels")) c.levels = j["levels"].get<std::vector<double>>();
  if (j.contains("grid")) c.grid = grid_spec_from_json(j["grid"]);
  if (j.contains("lyapunov")) c.lyapunov = lyapunov_spec_from_json(j["lyapunov"]);
  if (j.contains("lyapunov_vector")) c.lyapunov_vector = vector_from_json(j["lyapunov_vector"], "certify.lyapunov_vector");
  if (j.contains("nu")) c.nu = vector_from_json(j["nu"], "certify.nu");
  c.signal_only = value_or(j, "signal_only", false);
  c.signal_c = value_or(j, "signal_c", c.signal_c);
  if (j.contains("transfer_alpha")) c.transfer_alpha = j["transfer_alpha"].get<double>();
  if (j.contains("g_bar")) c.g_bar = j["g_bar"].get<double>();
  if (j.contains("expect")) c.expect = status_from(j["expect"].get<std::string>());
  return c;
}

OracleSpec oracle_from_json(const json& j) {
  require_known_keys(j, {"models", "max_states", "max_horizon", "tolerance"}, "oracle");
  OracleSpec o;
  o.models = value_or(j, "models", o.models);
  o.max_states = value_or(j, "max_states", o.max_states);
  o.max_horizon = value_or(j, "max_horizon", o.max_horizon);
  o.tolerance = value_or(j, "tolerance", o.tolerance);
  if (o.models == 0) reject("oracle.models must be at least 1");
  if (o.max_states < 2) reject("oracle.max_states must be at least 2");
  if (o.max_horizon < 2) reject("oracle.max_horizon must be at least 2");
  return o;
}

void validate(ExperimentSpec& spec) {
  const auto needs_model = [&](const char* what) {
    if (!spec.model) reject(to_string(spec.tag), " needs a model block (", what, ")");
  };
  const bool finite = is_finite_model(spec);
  if (finite && spec.observations.kind != ObservationSource::Kind::none)
    reject("finite models take no observation record; their potentials are given directly");
  if (spec.phi && !spec.phi->allFinite()) reject("φ must be bounded");
  switch (spec.tag) {
    case ExperimentTag::oracle_identities:
      if (spec.model && !finite) reject("oracle-identities works on finite models");
      break;
    case ExperimentTag::clt:
      needs_model("finite or linear-gaussian");
      if (!finite && !is_linear_gaussian(spec)) reject("clt supports finite and linear-gaussian models only");
      if (finite && !spec.phi) reject("clt on a finite model needs phi");
      if (!finite && spec.phi) reject("clt on a linear-gaussian model uses φ(x) = x; drop the phi key");
      if (spec.engine.rule.kind != NRule::Kind::fixed) reject("clt needs a fixed particle count");
      if (spec.engine.replicates < 2) reject("engine.replicates must be at least 2");
      break;
    case ExperimentTag::relvar:
      needs_model("finite or linear-gaussian");
      if (!finite && !is_linear_gaussian(spec)) reject("relvar supports finite and linear-gaussian models only");
      if (spec.engine.replicates < 2) reject("engine.replicates must be at least 2");
      break;
    case ExperimentTag::forgetting:
      needs_model("finite");
      if (!finite) reject("forgetting works on finite models");
      if (!spec.mu_prime) reject("forgetting needs mu_prime");
      break;
    case ExperimentTag::certify:
      needs_model("any family");
      if (spec.certify.levels.empty()) reject("certify needs certify.levels");
      if (finite && spec.certify.lyapunov) reject("finite models take certify.lyapunov_vector, not certify.lyapunov");
      if (!finite && (spec.certify.lyapunov_vector || spec.certify.nu))
        reject("certify.lyapunov_vector and certify.nu apply to finite models only");
      break;
    case ExperimentTag::pf_run:
      needs_model("any family");
      break;
  }
  if (finite && spec.phi && static_cast<std::size_t>(spec.phi->size()) != finite_of(spec).size())
    reject("phi has ", spec.phi->size(), " entries for a ", finite_of(spec).size(), "-state model");
  const bool wants_record =
      spec.model && !finite &&
      (spec.tag == ExperimentTag::clt || spec.tag == ExperimentTag::relvar || spec.tag == ExperimentTag::pf_run);
  if (wants_record && spec.observations.kind == ObservationSource::Kind::none) {
    spec.observations.kind = ObservationSource::Kind::simulate;
    spec.observations.seed = spec.engine.seed;
  }
  if (spec.observations.kind == ObservationSource::Kind::simulate && spec.observations.length == 0)
    spec.observations.length = n_max_of(spec);
}

json record_to_json(const ObservationRecord& y) {
  json out = json::array();
  for (const auto& v : y) out.push_back(v);
  return out;
}

}  // namespace

const char* to_string(ExperimentTag tag) {
  for (const auto& [t, name] : kTags)
    if (t == tag) return name;
  return "?";
}

ExperimentTag experiment_tag_from(const std::string& name) {
  for (const auto& [t, n] : kTags)
    if (name == n) return t;
  reject("unknown experiment tag '", name,
         "' (expected oracle-identities, clt, relvar, forgetting, certify or pf-run)");
}

ExperimentSpec spec_from_json(const json& j, const std::filesystem::path& base_dir, std::optional<ExperimentTag> tag) {
  require_known_keys(j, {"experiment", "model", "observations", "engine", "phi", "mu_prime", "certify", "oracle", "output"},
                     "config");
  ExperimentSpec spec;
  if (j.contains("experiment")) {
    spec.tag = experiment_tag_from(j["experiment"].get<std::string>());
    if (tag && *tag != spec.tag)
      reject("config names experiment '", to_string(spec.tag), "' but '", to_string(*tag), "' was requested");
  } else if (tag) {
    spec.tag = *tag;
  } else {
    reject("missing key 'experiment' in config");
  }
  if (j.contains("model")) spec.model = model_from_json(j["model"]);
  if (j.contains("observations")) spec.observations = source_from_json(j["observations"], base_dir);
  if (!j.contains("engine")) reject("missing key 'engine' in config (engine.seed is mandatory)");
  spec.engine = engine_from_json(j["engine"]);
  if (j.contains("phi")) spec.phi = vector_from_json(j["phi"], "phi");
  if (j.contains("mu_prime")) spec.mu_prime = vector_from_json(j["mu_prime"], "mu_prime");
  if (j.contains("certify")) spec.certify = certify_from_json(j["certify"]);
  if (j.contains("oracle")) spec.oracle = oracle_from_json(j["oracle"]);
  spec.output = value_or<std::string>(j, "output", spec.output);
  validate(spec);
  return spec;
}

ExperimentSpec parse_config(const std::filesystem::path& path, std::optional<ExperimentTag> tag) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return spec_from_json(j, path.parent_path(), tag);
}

json spec_to_json(const ExperimentSpec& spec) {
  json j;
  j["experiment"] = to_string(spec.tag);
  if (spec.model) j["model"] = model_to_json(*spec.model);
  const auto& obs = spec.observations;
  switch (obs.kind) {
    case ObservationSource::Kind::none: break;
    case ObservationSource::Kind::simulate:
      j["observations"] = {{"source", "simulate"}, {"seed", obs.seed}, {"length", obs.length}, {"constrain", obs.constrain}};
      break;
    case ObservationSource::Kind::inline_values:
      j["observations"] = {{"source", "inline"}, {"values", record_to_json(obs.values)}};
      break;
    case ObservationSource::Kind::file: j["observations"] = {{"source", "file"}, {"path", obs.path}}; break;
  }
  j["engine"] = {{"seed", spec.engine.seed},
                 {"n_rule",
                  {{"kind", spec.engine.rule.kind == NRule::Kind::fixed ? "fixed" : "proportional"},
                   {"particles", spec.engine.rule.particles},
                   {"kappa", spec.engine.rule.kappa}}},
                 {"n_list", spec.engine.n_list},
                 {"replicates", spec.engine.replicates}};
  if (spec.phi) j["phi"] = vector_to_json(*spec.phi);
  if (spec.mu_prime) j["mu_prime"] = vector_to_json(*spec.mu_prime);
  const auto& c = spec.certify;
  json cj{{"delta", c.delta ? json(*c.delta) : json(nullptr)},
          {"levels", c.levels},
          {"grid", to_json(c.grid)},
          {"signal_only", c.signal_only},
          {"signal_c", c.signal_c}};
  if (c.lyapunov) cj["lyapunov"] = to_json(*c.lyapunov);
  if (c.lyapunov_vector) cj["lyapunov_vector"] = vector_to_json(*c.lyapunov_vector);
  if (c.nu) cj["nu"] = vector_to_json(*c.nu);
  if (c.transfer_alpha) cj["transfer_alpha"] = *c.transfer_alpha;
  if (c.g_bar) cj["g_bar"] = *c.g_bar;
  if (c.expect) cj["expect"] = to_string(*c.expect);
  j["certify"] = std::move(cj);
  j["oracle"] = {{"models", spec.oracle.models},
                 {"max_states", spec.oracle.max_states},
                 {"max_horizon", spec.oracle.max_horizon},
                 {"tolerance", spec.oracle.tolerance}};
  j["output"] = spec.output;
  return j;
}

bool operator==(const ExperimentSpec& a, const ExperimentSpec& b) { return spec_to_json(a) == spec_to_json(b); }

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string spec_hash(const ExperimentSpec& spec) {
  json j = spec_to_json(spec);
  j.erase("output");  // where results go does not change what they are
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

bool ExperimentResult::all_passed() const {
  return std::all_of(criteria.begin(), criteria.end(), [](const Criterion& c) { return c.passed; });
}

ObservationRecord materialize_observations(const ExperimentSpec& spec) {
  const auto& obs = spec.observations;
  switch (obs.kind) {
    case ObservationSource::Kind::none: return {};
    case ObservationSource::Kind::inline_values: return obs.values;
    case ObservationSource::Kind::file: {
      std::ifstream f(obs.path);
      if (!f) throw IoError("cannot read observation file " + obs.path);
      json j;
      try {
        j = json::parse(f);
      } catch (const json::parse_error& e) {
        throw ValidationError("observation file " + obs.path + " is not valid JSON: " + e.what());
      }
      return record_from_json(j, "observation file");
    }
    case ObservationSource::Kind::simulate: {
      if (!spec.model || is_finite_model(spec)) reject("simulated observations need a continuous model");
      const auto model = build_model(params_of(spec));
      return simulate_hmm(model, obs.length, obs.seed, SimulationOptions{obs.constrain, 10000}).y;
    }
  }
  return {};
}

// ---------------------------------------------------------------- runners

namespace {

void add_criterion(ExperimentResult& r, std::string name, bool passed, double value, double threshold,
                   std::string detail = {}) {
  r.criteria.push_back(Criterion{std::move(name), passed, value, threshold, std::move(detail)});
}

json finite_or_string(double v) {
  if (std::isfinite(v)) return v;
  return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
}

struct IdentityResiduals {
  double flow = 0.0;
  double h_recursion = 0.0;
  double h_normalization = 0.0;
  double gamma_product = 0.0;
  double change_of_measure = 0.0;
};

IdentityResiduals identity_residuals(const FiniteModel& model, std::size_t n, const Vector& phi) {
  IdentityResiduals r;
  const auto traj = exact_filter(model, n);
  const auto spec = h_functions(model, traj, n);
  for (std::size_t p = 0; p <= n; ++p) {
    const Vector h_p = spec.h.row(static_cast<Eigen::Index>(p)).transpose();
    r.h_normalization = std::max(r.h_normalization, std::abs(traj.etas[p].dot(h_p) - 1.0));
    if (p == n) break;
    const Matrix q = model.q_matrix(p + 1);
    const Vector lhs = q.transpose() * traj.etas[p];
    r.flow = std::max(r.flow, (lhs - traj.lambdas[p] * traj.etas[p + 1]).cwiseAbs().maxCoeff());
    const Vector h_next = spec.h.row(static_cast<Eigen::Index>(p + 1)).transpose();
    const Vector diff = q * h_next - traj.lambdas[p] * h_p;
    r.h_recursion = std::max(r.h_recursion, diff.cwiseAbs().maxCoeff() / std::max(1.0, h_p.cwiseAbs().maxCoeff()));
    const auto com = change_of_measure(model, traj, p, n, phi);
    r.change_of_measure = std::max(r.change_of_measure, (com.lhs - com.rhs).cwiseAbs().maxCoeff() /
                                                            std::max(1.0, com.lhs.cwiseAbs().maxCoeff()));
  }
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(model.size()));
  for (std::size_t p = 0; p <= n; ++p) {
    const double direct = std::log(model.initial().dot(semigroup_matrix(model, 0, p) * ones));
    double sum = 0.0;
    for (std::size_t q = 0; q < p; ++q) sum += traj.log_lambdas[q];
    r.gamma_product = std::max({r.gamma_product, std::abs(direct - traj.log_gamma[p]), std::abs(sum - traj.log_gamma[p])});
  }
  return r;
}

void run_oracle(const ExperimentSpec& spec, ExperimentResult& out) {
  RandomStream rng(spec.engine.seed, 0);
  IdentityResiduals worst;
  json per_model = json::array();
  auto absorb = [&](const FiniteModel& model, std::size_t n, std::size_t index) {
    Vector phi(static_cast<Eigen::Index>(model.size()));
    for (auto& v : phi) v = 2.0 * rng.uniform() - 1.0;
    const auto r = identity_residuals(model, n, phi);
    worst.flow = std::max(worst.flow, r.flow);
    worst.h_recursion = std::max(worst.h_recursion, r.h_recursion);
    worst.h_normalization = std::max(worst.h_normalization, r.h_normalization);
    worst.gamma_product = std::max(worst.gamma_product, r.gamma_product);
    worst.change_of_measure = std::max(worst.change_of_measure, r.change_of_measure);
    per_model.push_back({{"model", index}, {"states", model.size()}, {"n", n}});
    out.table.add("oracle-identities", "flow", index, r.flow);
    out.table.add("oracle-identities", "h_recursion", index, r.h_recursion);
    out.table.add("oracle-identities", "h_normalization", index, r.h_normalization);
    out.table.add("oracle-identities", "gamma_product", index, r.gamma_product);
    out.table.add("oracle-identities", "change_of_measure", index, r.change_of_measure);
  };
  for (std::size_t i = 0; i < spec.oracle.models; ++i) {
    RandomModelOptions o;
    o.states = 2 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(spec.oracle.max_states - 1));
    o.horizon = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(spec.oracle.max_horizon));
    o.horizon = std::clamp<std::size_t>(o.horizon, 2, spec.oracle.max_horizon);
    const auto model = random_finite_model(rng, o);
    absorb(model, o.horizon, i);
  }
  if (spec.model) {
    const auto& model = finite_of(spec);
    absorb(model, model.horizon_limit().value_or(spec.oracle.max_horizon), spec.oracle.models);
  }
  const double tol = spec.oracle.tolerance;
  add_criterion(out, "eta-flow", worst.flow <= tol, worst.flow, tol);
  add_criterion(out, "h-recursion", worst.h_recursion <= tol, worst.h_recursion, tol);
  add_criterion(out, "h-normalization", worst.h_normalization <= tol, worst.h_normalization, tol);
  add_criterion(out, "gamma-product", worst.gamma_product <= tol, worst.gamma_product, tol);
  add_criterion(out, "change-of-measure", worst.change_of_measure <= tol, worst.change_of_measure, tol);
  out.summary["results"] = {{"max_residuals",
                             {{"eta_flow", worst.flow},
                              {"h_recursion", worst.h_recursion},
                              {"h_normalization", worst.h_normalization},
                              {"gamma_product", worst.gamma_product},
                              {"change_of_measure", worst.change_of_measure}}},
                            {"models", per_model}};
}

void run_clt(const ExperimentSpec& spec, const ObservationRecord& y, std::size_t workers, ExperimentResult& out) {
  CltOptions opts;
  opts.workers = workers;
  const bool finite = is_finite_model(spec);
  const auto report = finite ? clt_variance_experiment(finite_of(spec), *spec.phi, spec.engine.rule.particles,
                                                       spec.engine.n_list, spec.engine.replicates, spec.engine.seed, opts)
                             : clt_variance_experiment(std::get<LinearGaussianParams>(params_of(spec)), y,
                                                       spec.engine.rule.particles, spec.engine.n_list,
                                                       spec.engine.replicates, spec.engine.seed, opts);
  json rows = json::array();
  for (const auto& row : report.rows) {
    out.table.add("clt", "empirical_variance", row.n, row.empirical, row.std_error);
    out.table.add("clt", "mc_mean", row.n, row.mc_mean, row.mean_std_error);
    out.table.add("clt", "reference_mean", row.n, row.reference_mean);
    rows.push_back({{"n", row.n},
                    {"empirical", row.empirical},
                    {"std_error", row.std_error},
                    {"exact", finite_or_string(row.exact)},
                    {"ratio", finite_or_string(row.ratio)},
                    {"mc_mean", row.mc_mean},
                    {"reference_mean", row.reference_mean}});
    const std::string tag = "n" + std::to_string(row.n);
    if (finite) {
      out.table.add("clt", "exact_variance", row.n, row.exact);
      const bool ok = row.exact > 0.0 ? std::abs(row.ratio - 1.0) <= 0.15 : row.empirical == 0.0;
      add_criterion(out, "clt-variance-" + tag, ok, row.ratio, 0.15, "|empirical / exact - 1| <= 0.15");
    } else {
      const double gap = std::abs(row.mc_mean - row.reference_mean);
      add_criterion(out, "kalman-mean-" + tag, gap <= 3.0 * row.mean_std_error, gap, 3.0 * row.mean_std_error,
                    "|mean π_n^N(x) - Kalman mean| <= 3 SE");
    }
  }
  for (std::size_t i = 0; i < report.sigma_sequence.size(); ++i)
    out.table.add("clt", "sigma2", i + 1, report.sigma_sequence[i]);
  json results{{"rows", rows}, {"particles", report.particles}, {"replicates", report.replicates}};
  if (report.trend) {
    const auto& t = *report.trend;
    results["trend"] = {{"first_half_max", t.first_half_max}, {"second_half_max", t.second_half_max}, {"eps", t.eps}};
    add_criterion(out, "sigma2-time-uniform", t.holds, t.second_half_max, (1.0 + t.eps) * t.first_half_max,
                  "max over the second half <= 1.05 x max over the first half");
  }
  out.summary["results"] = std::move(results);
}

json fit_json(const FitReport& f) {
  return {{"mode", to_string(f.mode)}, {"slope", f.slope}, {"intercept", f.intercept}, {"r_squared", f.r_squared},
          {"residual_max", f.residual_max}, {"points_used", f.points_used}, {"dropped", f.dropped}, {"note", f.note}};
}

void run_relvar(const ExperimentSpec& spec, const ObservationRecord& y, std::size_t workers, ExperimentResult& out) {
  RelvarOptions opts;
  opts.workers = workers;
  const auto report =
      is_finite_model(spec)
          ? relvar_growth_experiment(finite_of(spec), spec.engine.rule, spec.engine.n_list, spec.engine.replicates,
                                     spec.engine.seed, opts)
          : relvar_growth_experiment(std::get<LinearGaussianParams>(params_of(spec)), y, spec.engine.rule,
                                     spec.engine.n_list, spec.engine.replicates, spec.engine.seed, opts);
  json rows = json::array();
  for (const auto& row : report.rows) {
    out.table.add("relvar", "empirical", row.n, row.empirical, row.std_error);
    out.table.add("relvar", "scaled", row.n, row.scaled);
    json r{{"n", row.n}, {"particles", row.particles}, {"empirical", row.empirical}, {"std_error", row.std_error},
           {"scaled", row.scaled}};
    if (row.exact) {
      out.table.add("relvar", "exact", row.n, *row.exact);
      r["exact"] = *row.exact;
      const double gap = std::abs(row.empirical - *row.exact);
      add_criterion(out, "relvar-exact-n" + std::to_string(row.n), gap <= 3.0 * row.std_error, gap,
                    3.0 * row.std_error, "|Monte Carlo - enumerated| <= 3 SE");
    }
    rows.push_back(std::move(r));
  }
  json results{{"rows", rows}, {"replicates", report.replicates}, {"note", report.note}};
  if (report.fit) {
    results["fit"] = fit_json(*report.fit);
    add_criterion(out, "relvar-linear-fit", report.fit->r_squared >= 0.95, report.fit->r_squared, 0.95,
                  "R² of relvar against n + 1");
  }
  out.summary["results"] = std::move(results);
}

void run_forgetting(const ExperimentSpec& spec, ExperimentResult& out) {
  const auto report = forgetting_experiment(finite_of(spec), *spec.mu_prime, spec.engine.n_list);
  for (const auto& [n, d] : report.distances) out.table.add("forgetting", "vnorm_distance", n, d);
  json results{{"exact_zero", report.exact_zero}, {"note", report.note}};
  if (report.exact_zero) {
    add_criterion(out, "exact-zero", true, 0.0, 0.0, "μ' = μ");
  } else if (report.fit) {
    results["fit"] = fit_json(*report.fit);
    results["rho_hat"] = *report.rho_hat;
    add_criterion(out, "geometric-decay", report.fit->slope < 0.0, report.fit->slope, 0.0, "log-linear slope < 0");
  } else {
    add_criterion(out, "geometric-decay", false, 0.0, 0.0, report.note);
  }
  out.summary["results"] = std::move(results);
}

void certificate_rows(const DriftCertificate& cert, const std::string& name, CsvTable& table) {
  for (std::size_t i = 0; i < cert.levels.size(); ++i) {
    const auto& l = cert.levels[i];
    table.add(name, "level", i, l.level);
    table.add(name, "b", i, l.b);
    table.add(name, "log_eps_minus", i, l.log_eps_minus);
    table.add(name, "log_eps_plus", i, l.log_eps_plus);
    table.add(name, "certified", i, l.certified ? 1.0 : 0.0);
  }
}

void run_certify(const ExperimentSpec& spec, ExperimentResult& out) {
  const auto& c = spec.certify;
  DriftCertificate cert;
  if (is_finite_model(spec)) {
    FiniteDriftOptions o;
    o.nu = c.nu;
    o.lyapunov = c.lyapunov_vector;
    cert = check_finite_drift(finite_of(spec), c.delta, c.levels, o);
  } else {
    const auto model = build_model(params_of(spec));
    if (c.signal_only) cert = check_signal_drift(model, c.signal_c, c.delta, c.levels, c.grid);
    else cert = check_grid_drift(model, c.lyapunov.value_or(model.default_lyapunov()), c.delta, c.levels, c.grid);
  }
  certificate_rows(cert, "certify", out.table);
  json results{{"status", to_string(cert.status)}};
  out.summary["certificate"] = to_json(cert);
  if (c.expect)
    add_criterion(out, "expected-status", cert.status == *c.expect, 0.0, 0.0,
                  std::string("expected ") + to_string(*c.expect) + ", got " + to_string(cert.status));
  if (c.transfer_alpha) {
    const auto moved = transfer_drift(cert, *c.transfer_alpha, c.g_bar.value_or(cert.g_bar));
    out.summary["transferred"] = to_json(moved);
    certificate_rows(moved, "transfer", out.table);
    if (is_finite_model(spec) && moved.status == CertificateStatus::certified) {
      FiniteDriftOptions o;
      o.nu = c.nu;
      o.lyapunov = *moved.lyapunov;
      std::vector<double> levels;
      for (const auto& l : moved.levels) levels.push_back(l.level);
      const auto recheck = check_finite_drift(finite_of(spec), moved.delta, levels, o);
      bool ok = recheck.status == CertificateStatus::certified;
      for (std::size_t i = 0; i < levels.size(); ++i)
        ok = ok && recheck.levels[i].certified && recheck.levels[i].b <= moved.levels[i].b + 1e-9;
      out.summary["transfer_recheck"] = to_json(recheck);
      add_criterion(out, "transfer-recertifies", ok, 0.0, 0.0, "check on α V certifies every transferred level");
    }
  }
  out.summary["results"] = std::move(results);
}

void run_pf(const ExperimentSpec& spec, const ObservationRecord& y, ExperimentResult& out) {
  const std::size_t n = n_max_of(spec);
  const std::size_t particles = spec.engine.rule.at(n);
  const RandomStream stream(spec.engine.seed, 0);
  json results{{"particles", particles}, {"n", n}};
  if (is_finite_model(spec)) {
    const auto& model = finite_of(spec);
    std::vector<TestFunction> phis;
    if (spec.phi) phis.push_back(finite_test_function(*spec.phi));
    const auto run = run_filter(FiniteSubstrate(model), particles, n, stream, phis);
    const auto traj = exact_filter(model, n);
    for (std::size_t p = 0; p <= n; ++p) {
      out.table.add("pf-run", "log_z", p, run.log_z[p]);
      out.table.add("pf-run", "exact_log_z", p, traj.log_gamma[p]);
      if (spec.phi) {
        out.table.add("pf-run", "phi", p, run.estimates[p][0]);
        out.table.add("pf-run", "exact_phi", p, traj.etas[p].dot(*spec.phi));
      }
    }
    results["log_z"] = run.log_z.back();
    results["exact_log_z"] = traj.log_gamma[n];
  } else {
    const auto model = build_model(params_of(spec));
    std::vector<TestFunction> phis{[](std::span<const double> x) { return x[0]; }};
    const auto run = run_filter(HmmSubstrate(model, y), particles, n, stream, phis);
    std::optional<KalmanTrajectory> kf;
    if (is_linear_gaussian(spec)) kf = kalman_filter(std::get<LinearGaussianParams>(params_of(spec)), scalar_observations(y));
    for (std::size_t p = 0; p <= n; ++p) {
      out.table.add("pf-run", "log_z", p, run.log_z[p]);
      out.table.add("pf-run", "mean_x1", p, run.estimates[p][0]);
      if (kf) {
        out.table.add("pf-run", "kalman_log_z", p, kf->log_z[p]);
        out.table.add("pf-run", "kalman_mean", p, kf->predictive_means[p]);
      }
    }
    results["log_z"] = run.log_z.back();
    if (kf) results["kalman_log_z"] = kf->log_z[n];
  }
  out.summary["results"] = std::move(results);
}

}  // namespace

ExperimentResult execute(const ExperimentSpec& spec, std::size_t workers) {
  ExperimentResult out;
  const auto y = materialize_observations(spec);
  if (!y.empty() && y.size() < n_max_of(spec))
    reject("observation record has ", y.size(), " entries but n = ", n_max_of(spec), " needs at least that many");
  out.summary["version"] = FKSTAB_VERSION;
  out.summary["spec_hash"] = spec_hash(spec);
  out.summary["experiment"] = to_string(spec.tag);
  if (!y.empty()) {
    json obs{{"length", y.size()}, {"dimension", y.front().size()}};
    switch (spec.observations.kind) {
      case ObservationSource::Kind::simulate: obs["source"] = "simulate"; obs["seed"] = spec.observations.seed; break;
      case ObservationSource::Kind::inline_values: obs["source"] = "inline"; break;
      case ObservationSource::Kind::file: obs["source"] = "file"; obs["path"] = spec.observations.path; break;
      case ObservationSource::Kind::none: break;
    }
    obs["record_hash"] = fnv1a64(record_to_json(y).dump());
    out.summary["observations"] = std::move(obs);
  }
  switch (spec.tag) {
    case ExperimentTag::oracle_identities: run_oracle(spec, out); break;
    case ExperimentTag::clt: run_clt(spec, y, workers, out); break;
    case ExperimentTag::relvar: run_relvar(spec, y, workers, out); break;
    case ExperimentTag::forgetting: run_forgetting(spec, out); break;
    case ExperimentTag::certify: run_certify(spec, out); break;
    case ExperimentTag::pf_run: run_pf(spec, y, out); break;
  }
  json criteria = json::array();
  for (const auto& c : out.criteria)
    criteria.push_back({{"name", c.name},
                        {"passed", c.passed},
                        {"value", finite_or_string(c.value)},
                        {"threshold", finite_or_string(c.threshold)},
                        {"detail", c.detail}});
  out.summary["criteria"] = std::move(criteria);
  out.summary["status"] = out.all_passed() ? "pass" : "fail";
  out.summary["results_csv"] = "results.csv";
  return out;
}

void write_artifacts(const ExperimentSpec& spec, const ExperimentResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  auto write_json = [&](const std::filesystem::path& p, const json& j) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot open " + p.string() + " for writing");
    f << j.dump(2) << '\n';
    if (!f) throw IoError("write to " + p.string() + " failed");
  };
  json resolved = spec_to_json(spec);
  write_json(dir / "resolved_config.json", resolved);
  result.table.write(dir / "results.csv");
  write_json(dir / "summary.json", result.summary);
}

int run_experiment(ExperimentSpec spec, const RunOptions& options) {
  if (options.seed_override) spec.engine.seed = *options.seed_override;
  if (options.out) spec.output = options.out->string();
  const auto result = execute(spec, options.workers);
  write_artifacts(spec, result, spec.output);
  return result.all_passed() ? 0 : 1;
}

}  // namespace fkstab
