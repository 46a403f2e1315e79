// fkstab command-line front end.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>

#include "fkstab/error.hpp"
#include "fkstab/experiment.hpp"
#include "fkstab/finite_oracle.hpp"

namespace {

using fkstab::ExperimentTag;
using fkstab::json;

struct Common {
  std::string config;
  std::string out;
  std::size_t workers = 0;
  std::optional<std::uint64_t> seed_override;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON experiment config")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory (overrides the config)");
  cmd->add_option("--workers", c.workers, "replicate worker threads (0 = all cores)");
  cmd->add_option("--seed-override", c.seed_override, "replace engine.seed");
}

int run(const Common& c, std::optional<ExperimentTag> tag) {
  auto spec = fkstab::parse_config(c.config, tag);
  fkstab::RunOptions options;
  options.workers = c.workers;
  options.seed_override = c.seed_override;
  if (!c.out.empty()) options.out = c.out;
  const int status = fkstab::run_experiment(spec, options);
  const auto dir = options.out ? options.out->string() : spec.output;
  std::cout << fkstab::to_string(spec.tag) << ": " << (status == 0 ? "pass" : "fail") << " (artifacts in " << dir
            << ")\n";
  return status;
}

// Prints the exact filter, λ-values and log γ for a finite model.
int oracle_dump(const Common& c) {
  auto spec = fkstab::parse_config(c.config);
  if (!spec.model || !std::holds_alternative<fkstab::FiniteModel>(*spec.model))
    throw fkstab::ValidationError("oracle needs a finite model block");
  const auto& model = std::get<fkstab::FiniteModel>(*spec.model);
  std::size_t n = 0;
  for (auto v : spec.engine.n_list) n = std::max(n, v);
  const auto traj = fkstab::exact_filter(model, n);
  json out{{"n", n}, {"lambdas", traj.lambdas}, {"log_gamma", traj.log_gamma}};
  json etas = json::array();
  for (const auto& e : traj.etas) etas.push_back(fkstab::vector_to_json(e));
  out["etas"] = std::move(etas);
  if (spec.phi) out["asymptotic_variance"] = fkstab::asymptotic_variance(model, traj, *spec.phi, n);
  if (n <= fkstab::kRelvarHorizonCap && spec.engine.rule.kind == fkstab::NRule::Kind::fixed &&
      spec.engine.rule.particles >= 2)
    out["relative_variance"] = fkstab::relvar_expansion(model, spec.engine.rule.particles, n).total;
  if (c.out.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    std::filesystem::create_directories(c.out);
    std::ofstream f(std::filesystem::path(c.out) / "oracle.json");
    if (!f) throw fkstab::IoError("cannot write " + c.out + "/oracle.json");
    f << out.dump(2) << '\n';
  }
  return 0;
}

int report(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "summary.json";
  std::ifstream f(path);
  if (!f) throw fkstab::IoError("cannot read " + path.string());
  const json s = json::parse(f);
  std::cout << s.value("experiment", "?") << "  version " << s.value("version", "?") << "  spec " << s.value("spec_hash", "?")
            << '\n';
  bool ok = true;
  for (const auto& c : s.value("criteria", json::array())) {
    const bool passed = c.value("passed", false);
    ok = ok && passed;
    std::cout << (passed ? "PASS " : "FAIL ") << c.value("name", "?");
    if (!c.value("detail", std::string()).empty()) std::cout << "  (" << c["detail"].get<std::string>() << ")";
    std::cout << '\n';
  }
  if (s.contains("certificate")) {
    const auto& cert = s["certificate"];
    std::cout << "certificate: " << cert.value("status", "?") << "  " << cert.value("description", "") << '\n';
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feynman-Kac stability toolkit"};
  app.set_version_flag("--version", FKSTAB_VERSION);
  app.require_subcommand(1);

  Common certify_opts, oracle_opts, pf_opts, exp_opts;
  std::string tag_name, report_dir;
  auto* certify = app.add_subcommand("certify", "check the drift/minorization assumptions");
  add_common(certify, certify_opts);
  auto* oracle = app.add_subcommand("oracle", "exact finite-model filter quantities");
  add_common(oracle, oracle_opts);
  auto* pf = app.add_subcommand("pf", "single particle-filter run");
  add_common(pf, pf_opts);
  auto* exp = app.add_subcommand("experiment", "run a tagged experiment");
  exp->add_option("tag", tag_name, "oracle-identities | clt | relvar | forgetting | certify | pf-run")->required();
  add_common(exp, exp_opts);
  auto* rep = app.add_subcommand("report", "print the pass/fail table of a finished run");
  rep->add_option("--out", report_dir, "artifact directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*certify) return run(certify_opts, ExperimentTag::certify);
    if (*oracle) return oracle_dump(oracle_opts);
    if (*pf) return run(pf_opts, ExperimentTag::pf_run);
    if (*exp) return run(exp_opts, fkstab::experiment_tag_from(tag_name));
    if (*rep) return report(report_dir);
  } catch (const fkstab::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return 3;
  } catch (const fkstab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
