// posoc: experiment driver. Exit codes: 0 ok, 1 configuration error,
// 2 runtime failure, 3 invariant failure.

#include <omp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "posoc/experiments.hpp"

namespace fs = std::filesystem;
using namespace posoc;

namespace {

struct Common {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<CLI::Option*> seed_opts;
  std::string out = "out";
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c, bool need_scenario = true) {
  auto* opt = cmd->add_option("--scenario", c.scenario, "Scenario JSON file");
  if (need_scenario) opt->required();
  c.seed_opts.push_back(cmd->add_option("--seed", c.seed, "Overrides training and evaluation seeds"));
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--threads", c.threads, "OpenMP threads (0 keeps the default)");
}

Scenario prepare(const Common& c, RunOptions& opt) {
  if (c.threads > 0) omp_set_num_threads(c.threads);
  Scenario s = load_scenario(c.scenario);
  for (const auto* o : c.seed_opts) {
    if (o->count() > 0) s.set_seed(c.seed);
  }
  fs::create_directories(c.out);
  opt.out_dir = c.out;
  return s;
}

class RunLog {
 public:
  explicit RunLog(const std::string& dir) : out_(fs::path(dir) / "run.log", std::ios::app) {}
  void line(const std::string& s) {
    std::cout << s << "\n";
    if (out_) out_ << s << "\n";
  }

 private:
  std::ofstream out_;
};

void summarize(RunLog& log, const std::vector<ExperimentReport>& reports) {
  for (const auto& r : reports) {
    std::ostringstream os;
    os << r.scenario_id << " N_o=" << r.n_obs << " " << r.method << ": ";
    if (r.error.empty()) {
      os << r.mean_cost << " +- " << r.ci95;
    } else {
      os << "failed (" << r.error << ")";
    }
    log.line(os.str());
  }
}

int finish(const Common& c, const std::vector<ExperimentReport>& reports) {
  write_report_json((fs::path(c.out) / "report.json").string(), reports);
  RunLog log(c.out);
  summarize(log, reports);
  for (const auto& r : reports) {
    if (!r.error.empty()) return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Particle Pontryagin solver for partially observed stochastic control"};
  app.require_subcommand(1);

  Common c;
  std::size_t n_obs = 0;
  std::string ansatz, instances;

  auto* train_cmd = app.add_subcommand("train", "Train a policy on one observation schedule");
  add_common(train_cmd, c);
  train_cmd->add_option("--n-obs", n_obs, "Number of observations (defaults to the scenario's first)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Monte Carlo evaluation of a trained ansatz and the baselines");
  add_common(eval_cmd, c);
  eval_cmd->add_option("--ansatz", ansatz, "Ansatz JSON from train");

  auto* t1 = app.add_subcommand("table1", "Particle vs separation vs fully observed, per N_o");
  add_common(t1, c);
  auto* noise = app.add_subcommand("noise-study", "Fixed observation-noise baselines vs adaptive");
  add_common(noise, c);
  auto* obst = app.add_subcommand("obstacle", "Obstacle scenario vs zero control");
  add_common(obst, c);

  auto* oracle = app.add_subcommand("oracle", "Finite-state oracle invariants");
  add_common(oracle, c, false);
  oracle->add_option("--instances", instances, "Directory or file of chain instances")->required();

  auto* exp = app.add_subcommand("export-ansatz", "Coefficient table of a saved ansatz");
  exp->add_option("--ansatz", ansatz, "Ansatz JSON")->required();
  exp->add_option("--out", c.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    RunOptions opt;
    if (*train_cmd) {
      const Scenario s = prepare(c, opt);
      const std::size_t n = n_obs > 0 ? n_obs : s.schedule().size();
      return finish(c, {run_train(s, n, opt)});
    }
    if (*eval_cmd) {
      const Scenario s = prepare(c, opt);
      return finish(c, run_evaluate(s, ansatz, opt));
    }
    if (*t1) return finish(c, run_table1(prepare(c, opt), opt));
    if (*noise) return finish(c, run_controlled_noise(prepare(c, opt), opt));
    if (*obst) return finish(c, run_obstacle(prepare(c, opt), opt));
    if (*oracle) {
      if (c.threads > 0) omp_set_num_threads(c.threads);
      fs::create_directories(c.out);
      opt.out_dir = c.out;
      const auto reports = run_oracle_suite(instances, opt);
      RunLog log(c.out);
      for (const auto& r : reports) {
        std::ostringstream os;
        os << r.instance << ": ";
        if (r.rejected) {
          os << (r.expect_invalid ? "rejected as expected: " : "REJECTED: ") << r.message;
        } else {
          os << (r.hard_ok ? "pass" : "FAIL") << " V0=" << r.diag.V0
             << " argmin_disagreements=" << r.diag.argmin_disagreements;
          if (!r.message.empty()) os << " (" << r.message << ")";
        }
        log.line(os.str());
      }
      return oracle_suite_passed(reports) ? 0 : 3;
    }
    if (*exp) {
      fs::create_directories(c.out);
      export_ansatz_csv(ansatz, (fs::path(c.out) / "ansatz.csv").string());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 1;
  } catch (const InvariantError& e) {
    std::cerr << "invariant violated: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
