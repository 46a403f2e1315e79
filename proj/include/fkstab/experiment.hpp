#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fkstab/assumptions.hpp"
#include "fkstab/csv.hpp"
#include "fkstab/model_io.hpp"
#include "fkstab/stability_lab.hpp"

namespace fkstab {

enum class ExperimentTag { oracle_identities, clt, relvar, forgetting, certify, pf_run };
const char* to_string(ExperimentTag tag);
ExperimentTag experiment_tag_from(const std::string& name);

struct ObservationSource {
  enum class Kind { none, simulate, inline_values, file };
  Kind kind = Kind::none;
  std::uint64_t seed = 0;
  std::size_t length = 0;
  bool constrain = true;
  ObservationRecord values;
  std::string path;
};

struct EngineSpec {
  std::uint64_t seed = 0;
  NRule rule;
  std::vector<std::size_t> n_list{10};
  std::size_t replicates = 100;
};

struct CertifySpec {
  std::optional<double> delta;  // empty: scan the δ grid
  std::vector<double> levels;
  GridSpec grid;
  std::optional<LyapunovSpec> lyapunov;
  std::optional<Vector> lyapunov_vector;
  std::optional<Vector> nu;
  bool signal_only = false;
  double signal_c = 1.0;
  std::optional<double> transfer_alpha;
  std::optional<double> g_bar;
  std::optional<CertificateStatus> expect;
};

struct OracleSpec {
  std::size_t models = 100;
  std::size_t max_states = 10;
  std::size_t max_horizon = 20;
  double tolerance = 1e-9;
};

struct ExperimentSpec {
  ExperimentTag tag = ExperimentTag::pf_run;
  std::optional<ModelDefinition> model;
  ObservationSource observations;
  EngineSpec engine;
  std::optional<Vector> phi;
  std::optional<Vector> mu_prime;
  CertifySpec certify;
  OracleSpec oracle;
  std::string output = "out";
};

/// Strict parse: unknown keys and a missing engine.seed are errors.
/// Relative file paths resolve against base_dir.
ExperimentSpec spec_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {},
                              std::optional<ExperimentTag> tag = std::nullopt);
ExperimentSpec parse_config(const std::filesystem::path& path, std::optional<ExperimentTag> tag = std::nullopt);
/// Resolved config with every default filled; parses back to the same spec.
nlohmann::json spec_to_json(const ExperimentSpec& spec);
bool operator==(const ExperimentSpec& a, const ExperimentSpec& b);

std::uint64_t fnv1a64(std::string_view bytes);
std::string spec_hash(const ExperimentSpec& spec);

struct Criterion {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct ExperimentResult {
  nlohmann::json summary;
  CsvTable table;
  std::vector<Criterion> criteria;
  bool all_passed() const;
};

/// Runs the experiment without touching the filesystem.
ExperimentResult execute(const ExperimentSpec& spec, std::size_t workers = 0);

/// Writes resolved_config.json, results.csv and summary.json into dir.
void write_artifacts(const ExperimentSpec& spec, const ExperimentResult& result, const std::filesystem::path& dir);

struct RunOptions {
  std::size_t workers = 0;
  std::optional<std::uint64_t> seed_override;
  std::optional<std::filesystem::path> out;
};

/// execute + write_artifacts; returns 0 when every criterion passed.
int run_experiment(ExperimentSpec spec, const RunOptions& options = {});

/// Observation record materialized from the spec's source (empty for finite models).
ObservationRecord materialize_observations(const ExperimentSpec& spec);

}  // namespace fkstab
