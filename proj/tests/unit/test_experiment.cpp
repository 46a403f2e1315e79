#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "fkstab/csv.hpp"
#include "fkstab/error.hpp"
#include "fkstab/experiment.hpp"

using namespace fkstab;
namespace fs = std::filesystem;

namespace {

const char* kTwoStateModel = R"({"family": "finite",
  "transitions": [{"rows": 2, "cols": 2, "data": [0.9, 0.1, 0.2, 0.8]}],
  "potentials": [[2, 1]], "initial": [0.5, 0.5], "lyapunov": [1, 2]})";

json relvar_config() {
  json j;
  j["experiment"] = "relvar";
  j["model"] = json::parse(kTwoStateModel);
  j["engine"] = {{"seed", 7}, {"particles", 50}, {"n_list", {1, 2}}, {"replicates", 2000}};
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("fkstab_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("csv") {
  CHECK(csv_escape("plain") == "plain");
  CHECK(csv_escape("a,b") == "\"a,b\"");
  CHECK(csv_escape("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(-INFINITY) == "-inf");
  CsvTable t;
  t.add("relvar", "a,b", 3, 0.5, 0.01);
  const auto rows = parse_csv(t.to_string());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0] == std::vector<std::string>{"experiment", "parameter", "n", "value", "stderr"});
  CHECK(rows[1][1] == "a,b");
  CHECK(std::stod(rows[1][3]) == 0.5);
}

TEST_CASE("parse fills defaults and round-trips") {
  const auto spec = spec_from_json(relvar_config());
  CHECK(spec.tag == ExperimentTag::relvar);
  CHECK(spec.engine.rule.kind == NRule::Kind::fixed);
  CHECK(spec.engine.rule.particles == 50);
  CHECK(spec.output == "out");
  const json resolved = spec_to_json(spec);
  CHECK(resolved["engine"].contains("replicates"));
  const auto again = spec_from_json(resolved);
  CHECK(again == spec);
  CHECK(spec_to_json(again) == resolved);
  CHECK(spec_hash(again) == spec_hash(spec));
}

TEST_CASE("strict config errors") {
  auto j = relvar_config();
  j["engine"]["resample"] = "stratified";
  try {
    spec_from_json(j);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("resample") != std::string::npos);
  }
  auto k = relvar_config();
  k["engine"].erase("seed");
  try {
    spec_from_json(k);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("seed") != std::string::npos);
  }
  CHECK_THROWS_AS(spec_from_json(relvar_config(), {}, ExperimentTag::clt), ValidationError);
  auto f = relvar_config();
  f["model"] = {{"family", "linear-gaussian"}};
  f["observations"] = {{"source", "file"}, {"path", "does/not/exist.json"}};
  CHECK_THROWS(spec_from_json(f));
}

TEST_CASE("identical specs produce byte-identical artifacts") {
  const auto spec = spec_from_json(relvar_config());
  const auto dir = scratch("determinism");
  write_artifacts(spec, execute(spec, 1), dir);
  const std::string csv = slurp(dir / "results.csv");
  const std::string summary = slurp(dir / "summary.json");
  write_artifacts(spec, execute(spec, 3), dir);
  CHECK(slurp(dir / "results.csv") == csv);
  CHECK(slurp(dir / "summary.json") == summary);
  const auto resolved = parse_config(dir / "resolved_config.json");
  CHECK(resolved == spec);
  fs::remove_all(dir);
}

TEST_CASE("oracle identities run") {
  json j{{"experiment", "oracle-identities"}, {"engine", {{"seed", 3}}}, {"oracle", {{"models", 10}}}};
  const auto result = execute(spec_from_json(j));
  CHECK(result.all_passed());
  CHECK(result.criteria.size() >= 5);
  CHECK(result.summary["status"] == "pass");
}

TEST_CASE("a violated certificate is a successful run") {
  json j;
  j["experiment"] = "certify";
  j["model"] = {{"family", "random-walk"}, {"map", {{"kind", "sine"}, {"amplitude", 1.0}}}};
  j["engine"] = {{"seed", 1}};
  j["certify"] = {{"delta", 0.1}, {"levels", {4, 8}}};
  auto spec = spec_from_json(j);
  const auto dir = scratch("certify");
  RunOptions opts;
  opts.out = dir;
  CHECK(run_experiment(spec, opts) == 0);
  const auto summary = json::parse(slurp(dir / "summary.json"));
  CHECK(summary["results"]["status"] == "violated");
  CHECK(summary.contains("spec_hash"));
  CHECK(summary.contains("version"));
  fs::remove_all(dir);
}

TEST_CASE("unwritable output directory") {
  const auto dir = scratch("io");
  fs::create_directories(dir);
  std::ofstream(dir / "file") << "x";
  const auto spec = spec_from_json(relvar_config());
  CHECK_THROWS_AS(write_artifacts(spec, ExperimentResult{}, dir / "file" / "sub"), IoError);
  fs::remove_all(dir);
}
