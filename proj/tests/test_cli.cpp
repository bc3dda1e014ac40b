#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "posoc/experiments.hpp"
#include "posoc/lqg.hpp"

using namespace posoc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json shipped(const std::string& name) {
  std::ifstream in(std::string(POSOC_SOURCE_DIR) + "/scenarios/" + name);
  return json::parse(in);
}

std::string parse_error(const json& j) {
  try {
    parse_scenario(j.dump());
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("posoc_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json small_table1() {
  json j = shipped("table1.json");
  j["n_obs"] = {2};
  j["training"]["M_train"] = 200;
  j["training"]["n_outer"] = 3;
  j["evaluation"]["M_eval"] = 2000;
  return j;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(POSOC_CLI) + " " + args + " > /dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST_CASE("scenario errors name the field") {
  json j = shipped("table1.json");
  j.erase("id");
  CHECK(parse_error(j).find("scenario: missing field 'id'") != std::string::npos);

  j = shipped("table1.json");
  j["lqg"]["A"] = "bad";
  CHECK(parse_error(j).find("scenario.lqg.A") != std::string::npos);

  j = shipped("table1.json");
  j["lqg"]["A"] = {{1.0, 2.0}};
  CHECK(parse_error(j).find("scenario.lqg:") != std::string::npos);

  j = shipped("table1.json");
  j["training"]["M_train"] = -3;
  CHECK(parse_error(j).find("scenario.training.M_train") != std::string::npos);

  j = shipped("table1.json");
  j["n_obs"] = {1, -5};
  CHECK(parse_error(j).find("scenario.n_obs[1]") != std::string::npos);

  j = shipped("table1.json");
  j["training"]["dt"] = 0.0;
  CHECK(parse_error(j).find("scenario.training.dt") != std::string::npos);

  j = shipped("obstacle_1d.json");
  j["obstacle"]["r_in"] = 5.0;
  CHECK(parse_error(j).find("scenario.obstacle:") != std::string::npos);

  j = shipped("obstacle_1d.json");
  j["training"].erase("alpha_grid");
  CHECK(parse_error(j).find("alpha_grid") != std::string::npos);

  j = shipped("noise_1d.json");
  j["training"]["basis"] = "fourier";
  CHECK(parse_error(j).find("scenario.training.basis") != std::string::npos);

  CHECK_THROWS_AS(parse_scenario("{\"id\": "), ConfigError);
  CHECK_THROWS_AS(load_scenario("/nonexistent/scenario.json"), ConfigError);
}

TEST_CASE("shipped scenarios load") {
  for (const char* f : {"table1.json", "noise_1d.json", "noise_1d_3obs.json", "noise_10d.json",
                        "obstacle_1d.json", "obstacle_10d.json"}) {
    INFO(f);
    CHECK_NOTHROW(load_scenario(std::string(POSOC_SOURCE_DIR) + "/scenarios/" + f));
  }
}

TEST_CASE("config hash tracks the resolved configuration") {
  const json j = shipped("table1.json");
  const Scenario a = parse_scenario(j.dump());
  CHECK(a.config_hash() == parse_scenario(j.dump(2)).config_hash());
  CHECK(a.config_hash().size() == 16);

  json same = j;
  same["training"]["include_cross"] = true;  // the default, spelled out
  CHECK(parse_scenario(same.dump()).config_hash() == a.config_hash());

  for (auto edit : std::vector<std::function<void(json&)>>{
           [](json& x) { x["evaluation"]["M_eval"] = 99999; },
           [](json& x) { x["training"]["seed"] = 1; },
           [](json& x) { x["lqg"]["Sigma0"] = 1.0000001; },
           [](json& x) { x["n_obs"] = {1, 5, 10}; },
           [](json& x) { x["training"]["basis"] = "invariant"; }}) {
    json k = j;
    edit(k);
    CHECK(parse_scenario(k.dump()).config_hash() != a.config_hash());
  }
  Scenario b = a;
  b.set_seed(5);
  CHECK(b.config_hash() != a.config_hash());
  CHECK(parse_scenario(parse_scenario(j.dump()).resolved().dump()).config_hash() == a.config_hash());
}

TEST_CASE("empty schedule list gives no rows") {
  json j = shipped("table1.json");
  j["n_obs"] = json::array();
  CHECK(run_table1(parse_scenario(j.dump()), RunOptions{}).empty());
}

TEST_CASE("table rows are reproducible byte for byte") {
  const Scenario s = parse_scenario(small_table1().dump());
  const fs::path a = scratch("repro_a"), b = scratch("repro_b");
  const auto ra = run_table1(s, RunOptions{a.string()});
  run_table1(s, RunOptions{b.string()});
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().extension() != ".csv") continue;
    INFO(e.path().filename().string());
    CHECK(slurp(e.path()) == slurp(b / e.path().filename()));
    ++compared;
  }
  CHECK(compared >= 3);
  for (const auto& r : ra) {
    CHECK(r.error.empty());
    if (r.cost_to_go.empty()) continue;
    CHECK(std::abs(r.cost_to_go.front() - r.mean_cost) <= 1e-9);
    CHECK(r.config_hash == s.config_hash());
  }
}

TEST_CASE("worthless free information makes every noise level tie") {
  json j = shipped("noise_1d.json");
  j["lqg"]["C"] = 0.0;
  j["lqg"]["kappa"] = 1e-9;
  j["training"]["M_train"] = 1000;
  j["evaluation"]["M_eval"] = 20000;
  const auto reports = run_controlled_noise(parse_scenario(j.dump()), RunOptions{});
  REQUIRE(reports.size() == 4);
  const ExperimentReport& adaptive = reports.back();
  CHECK(adaptive.method == "adaptive");
  for (const auto& r : reports) {
    INFO(r.method);
    CHECK(r.error.empty());
    CHECK(std::abs(r.mean_cost - adaptive.mean_cost) <= r.ci95 + adaptive.ci95);
  }
}

TEST_CASE("obstacle without an obstacle is terminal regulation") {
  json j = shipped("obstacle_1d.json");
  j["obstacle"]["magnitude"] = 0.0;
  j["training"]["degree"] = 2;
  j["evaluation"]["M_eval"] = 20000;
  const Scenario s = parse_scenario(j.dump());
  const auto reports = run_obstacle(s, RunOptions{});
  const ExperimentReport* part = nullptr;
  for (const auto& r : reports)
    if (r.method == "particle") part = &r;
  REQUIRE(part != nullptr);

  const ObstacleSpec& o = *s.obstacle;
  LqgSpec l;
  l.A = Matrix::Zero(1, 1);
  l.B = Matrix::Identity(1, 1);
  l.C = o.C;
  l.sigma = o.sigma;
  l.Q = o.Q;
  l.Q_T = o.Q_T;
  l.R = o.R;
  l.m0 = o.m0;
  l.Sigma0 = o.Sigma0;
  l.fixed_eps = o.eps;
  const RiccatiSolution ricc = riccati_solve(l.A, l.B, l.Q, l.R, l.Q_T, s.horizon, s.riccati_dt);
  const ControlProblem p = s.problem(s.schedule());
  const auto [sep, sep_ci] = evaluate_policy_mc(p, *separation_policy(l, ricc, s.schedule(), s.eval_dt),
                                                s.M_eval, s.eval_dt, s.eval_seed);
  MESSAGE("trained " << part->mean_cost << " +- " << part->ci95 << ", separation " << sep << " +- " << sep_ci);
  CHECK(std::abs(part->mean_cost - sep) <= part->ci95 + sep_ci);
}

TEST_CASE("obstacle problem already at its target") {
  json j = shipped("obstacle_1d.json");
  j["obstacle"]["sigma"] = 0.0;
  j["obstacle"]["Sigma0"] = 0.0;
  j["obstacle"]["r_in"] = 0.5;
  j["evaluation"]["M_eval"] = 200;
  j["training"]["M_train"] = 100;
  const auto reports = run_obstacle(parse_scenario(j.dump()), RunOptions{});
  for (const auto& r : reports) {
    INFO(r.method);
    CHECK(r.mean_cost <= 1e-3);
  }
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch("exit");
  CHECK(run_cli("") == 1);
  CHECK(run_cli("table1") == 1);
  CHECK(run_cli("table1 --scenario /nonexistent.json --out " + dir.string()) == 1);

  json bad = shipped("table1.json");
  bad["training"]["M_train"] = -1;
  std::ofstream(dir / "bad.json") << bad.dump();
  CHECK(run_cli("table1 --scenario " + (dir / "bad.json").string() + " --out " + dir.string()) == 1);

  json blowup = small_table1();
  blowup["lqg"]["A"] = 1e6;
  std::ofstream(dir / "blowup.json") << blowup.dump();
  CHECK(run_cli("table1 --scenario " + (dir / "blowup.json").string() + " --out " + (dir / "b").string()) == 2);

  CHECK(run_cli("oracle --instances " + std::string(POSOC_SOURCE_DIR) + "/scenarios/oracle --out " +
                (dir / "o").string()) == 0);
  CHECK(fs::exists(dir / "o" / "run.log"));

  json fake = json::parse(slurp(std::string(POSOC_SOURCE_DIR) + "/scenarios/oracle/two_state.json"));
  fake["expect_invalid"] = true;
  fs::create_directories(dir / "inst");
  std::ofstream(dir / "inst" / "fake.json") << fake.dump();
  CHECK(run_cli("oracle --instances " + (dir / "inst").string() + " --out " + (dir / "f").string()) == 3);

  CHECK(run_cli("table1 --scenario " + (dir / "bad.json").string() + " --seed 4 --threads 1 --out " +
                dir.string()) == 1);
  std::ofstream(dir / "ok.json") << small_table1().dump();
  CHECK(run_cli("train --scenario " + (dir / "ok.json").string() + " --out " + (dir / "t").string()) == 0);
  CHECK(fs::exists(dir / "t" / "report.json"));
  fs::path ansatz;
  for (const auto& e : fs::directory_iterator(dir / "t"))
    if (e.path().filename().string().find("ansatz") != std::string::npos &&
        e.path().extension() == ".json")
      ansatz = e.path();
  REQUIRE_FALSE(ansatz.empty());
  CHECK(run_cli("evaluate --scenario " + (dir / "ok.json").string() + " --ansatz " + ansatz.string() +
                " --out " + (dir / "e").string()) == 0);
  CHECK(run_cli("export-ansatz --ansatz " + ansatz.string() + " --out " + (dir / "x").string()) == 0);
  CHECK(fs::exists(dir / "x" / "ansatz.csv"));
}
