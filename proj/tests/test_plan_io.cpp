#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "mfglab/io.hpp"
#include "mfglab/plan.hpp"
#include "mfglab/runner.hpp"

using namespace mfg;
namespace fs = std::filesystem;

namespace {

nlohmann::json minimal_plan(const std::string& action = "solve-finite") {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["action"] = action;
  j["grid"] = {{"n", 32}, {"d", 1}};
  j["problem"] = {{"kappa", 1.0}};
  j["params"] = {{"T", 1.0}};
  return j;
}

fs::path temp_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("mfglab_test_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("minimal config parses with defaults filled") {
  ExperimentPlan plan = parse_plan_json(minimal_plan());
  CHECK(plan.n == 32);
  CHECK(plan.solver.damping == 0.5);
  CHECK(plan.solver.tol == 1e-9);
  nlohmann::json echoed = plan.resolved_json();
  CHECK(echoed["solver"]["damping"] == 0.5);
  CHECK(echoed["problem"]["coupling"]["c1"] == 0.0);
  CHECK(echoed["params"]["T"] == 1.0);
}

TEST_CASE("config errors carry field paths") {
  auto bad_n = minimal_plan();
  bad_n["grid"]["n"] = 3;
  try {
    parse_plan_json(bad_n);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("grid.n") != std::string::npos);
  }

  auto typo = minimal_plan();
  typo["problem"]["coupling"] = {{"gamma_typo", 1.0}};
  try {
    parse_plan_json(typo);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("gamma_typo") != std::string::npos);
  }

  auto bad_version = minimal_plan();
  bad_version["schema_version"] = 2;
  CHECK_THROWS_AS(parse_plan_json(bad_version), ConfigError);

  auto bad_action = minimal_plan("frobnicate");
  CHECK_THROWS_AS(parse_plan_json(bad_action), ConfigError);
}

TEST_CASE("expression grammar validation") {
  auto j = minimal_plan();
  j["problem"]["coupling"] = {{"f0", {{{"kind", "sin"}, {"a", 0.5}, {"k", 1}}}}};
  ExperimentPlan plan = parse_plan_json(j);
  MFGProblem pb = plan.to_problem();
  CHECK(pb.coupling.f0[8] == Catch::Approx(0.5 * std::sin(2.0 * M_PI * 0.25)).margin(1e-15));

  auto bad = minimal_plan();
  bad["problem"]["terminal"] = {{{"kind", "warp"}, {"a", 1.0}}};
  CHECK_THROWS_AS(parse_plan_json(bad), ConfigError);
}

TEST_CASE("17-digit formatting round-trips doubles exactly") {
  for (double x : {1.0 / 3.0, 3.141592653589793, 1e-300, -2.2250738585072014e-308,
                   123456.78901234567, 0.1}) {
    std::string s = format_g17(x);
    CHECK(std::strtod(s.c_str(), nullptr) == x);
  }
}

TEST_CASE("series json mirrors the csv table") {
  CsvTable t;
  t.columns = {"a", "b"};
  t.rows = {{1.0 / 3.0, 2.0}, {3.0, 4.5e-17}};
  nlohmann::json j = detail_run::table_json(t);
  CHECK(j["schema_version"] == 1);
  CHECK(j["columns"][0] == "a");
  CHECK(j["rows"][0][0].get<double>() == 1.0 / 3.0);
  CHECK(j["rows"][1][1].get<double>() == 4.5e-17);
}

TEST_CASE("run_plan is deterministic: identical payload digests") {
  auto j = minimal_plan("turnpike");
  j["grid"]["n"] = 32;
  j["params"]["T"] = 1.0;
  j["problem"]["coupling"] = {{"c1", 1.0},
                              {"f0", {{{"kind", "sin"}, {"a", 0.5}, {"k", 1}}}}};
  ExperimentPlan plan = parse_plan_json(j);

  RunOptions opt_a;
  opt_a.out_dir = temp_dir("det_a");
  opt_a.seed = 11;
  RunOptions opt_b;
  opt_b.out_dir = temp_dir("det_b");
  opt_b.seed = 11;
  RunManifest a = run_plan(plan, opt_a);
  RunManifest b = run_plan(plan, opt_b);
  REQUIRE(a.files.size() == b.files.size());
  for (size_t i = 0; i < a.files.size(); ++i) {
    CHECK(a.files[i].path == b.files[i].path);
    CHECK(a.files[i].digest == b.files[i].digest);
  }
  CHECK(a.plan_hash == b.plan_hash);
}

TEST_CASE("failing sweep rows mark the run but preserve outputs") {
  auto j = minimal_plan("horizon-limit");
  j["params"] = {{"T_list", {2.0, 3.0}}, {"t_probe", 0.5}};
  j["problem"]["coupling"] = {{"c1", 1.0}};
  j["solver"] = {{"max_iters", 1}, {"tol", 1e-14}};
  ExperimentPlan plan = parse_plan_json(j);
  RunOptions opt;
  opt.out_dir = temp_dir("failrow");
  RunManifest man = run_plan(plan, opt);
  CHECK(man.exit_status == 3);
  bool has_study = false;
  for (const auto& f : man.files) has_study |= f.path.find("study") != std::string::npos;
  CHECK(has_study);
}

TEST_CASE("run directory is self-describing") {
  ExperimentPlan plan = parse_plan_json(minimal_plan());
  RunOptions opt;
  opt.out_dir = temp_dir("resolve");
  run_plan(plan, opt);
  CHECK(fs::exists(opt.out_dir / "plan.resolved.json"));
  CHECK(fs::exists(opt.out_dir / "manifest.json"));
  nlohmann::json resolved = nlohmann::json::parse(read_file(opt.out_dir / "plan.resolved.json"));
  CHECK(resolved["solver"]["tol"] == 1e-9);  // defaults echoed back
  // the resolved plan parses back to the same experiment
  resolved.erase("seed");
  ExperimentPlan round = parse_plan_json(resolved);
  CHECK(round.action_name == "solve-finite");
}
