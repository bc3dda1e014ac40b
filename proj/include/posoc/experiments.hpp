#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "posoc/discrete.hpp"
#include "posoc/kernels.hpp"
#include "posoc/scenario.hpp"

namespace posoc {

struct ExperimentReport {
  std::string scenario_id;
  std::string method;
  std::size_t n_obs = 0;
  double mean_cost = 0.0;
  double ci95 = 0.0;
  std::vector<double> times;
  /// Mean remaining pathwise cost per grid node; cost_to_go[0] == mean_cost.
  std::vector<double> cost_to_go;
  double runtime_seconds = 0.0;
  std::uint64_t train_seed = 0;
  std::uint64_t eval_seed = 0;
  std::string config_hash;
  /// Extra figures (occupancy, paired differences, ...).
  std::map<std::string, double> stats;
  /// Non-empty when this row failed; other rows still run.
  std::string error;
};

nlohmann::json to_json(const ExperimentReport& r);
void write_report_json(const std::string& path, const std::vector<ExperimentReport>& reports);

struct RunOptions {
  /// Output directory; nothing is written when empty.
  std::string out_dir;
  Execution exec = Execution::parallel;
};

/// Trains and evaluates one scenario schedule; writes the ansatz and log.
ExperimentReport run_train(const Scenario& s, std::size_t n_obs, const RunOptions& opt);

/// Particle policy, separation benchmark and fully observed value for every
/// N_o of the scenario. Writes table1.csv, benchmark.csv and cost_to_go_N*.csv.
std::vector<ExperimentReport> run_table1(const Scenario& s, const RunOptions& opt);

/// Fixed-beta baselines and the adaptive policy. Writes noise_study.csv,
/// cost_to_go.csv and a trajectory dump of the adaptive policy.
std::vector<ExperimentReport> run_controlled_noise(const Scenario& s, const RunOptions& opt);

/// Trained grid-search (or closed-form) policy vs zero control, with paired
/// differences of cost and penalty-region occupancy.
std::vector<ExperimentReport> run_obstacle(const Scenario& s, const RunOptions& opt);

struct OracleReport {
  std::string instance;
  bool rejected = false;      // failed validation at load
  bool expect_invalid = false;
  std::string message;
  OracleDiagnostics diag;
  double particle_mean = 0.0;
  double particle_ci = 0.0;
  bool hard_ok = false;
};

/// Every *.json in `instances` (a directory or a single file). Instances with
/// "expect_invalid": true must be rejected at load.
std::vector<OracleReport> run_oracle_suite(const std::string& instances, const RunOptions& opt);
/// True when every hard invariant held and every invalid instance was rejected.
bool oracle_suite_passed(const std::vector<OracleReport>& reports);

/// Evaluates a policy (trained ansatz when given, else the benchmarks).
std::vector<ExperimentReport> run_evaluate(const Scenario& s, const std::string& ansatz_path,
                                           const RunOptions& opt);

/// Coefficient table of a saved ansatz as CSV.
void export_ansatz_csv(const std::string& ansatz_path, const std::string& csv_path);

inline constexpr double kOracleTol = 1e-10;

}  // namespace posoc
