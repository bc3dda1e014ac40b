#include "posoc/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "posoc/lqg.hpp"
#include "posoc/pmp.hpp"

namespace posoc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::ofstream open_out(const RunOptions& opt, const std::string& name) {
  fs::create_directories(opt.out_dir);
  std::ofstream out(fs::path(opt.out_dir) / name);
  if (!out) throw Error("cannot write " + (fs::path(opt.out_dir) / name).string());
  out << std::setprecision(12);
  return out;
}

std::string beta_label(double b) {
  std::ostringstream os;
  os << "beta=" << b;
  return os.str();
}

McResult evaluate(const Scenario& s, const ControlProblem& p, const PolicyPair& policy,
                  Execution exec) {
  McOptions o;
  o.M = s.M_eval;
  o.dt = s.eval_dt;
  o.seed = s.eval_seed;
  return monte_carlo(p, policy, o, exec);
}

ExperimentReport base_report(const Scenario& s, const std::string& method, std::size_t n_obs) {
  ExperimentReport r;
  r.scenario_id = s.id;
  r.method = method;
  r.n_obs = n_obs;
  r.train_seed = s.train.seed;
  r.eval_seed = s.eval_seed;
  r.config_hash = s.config_hash();
  return r;
}

void fill(ExperimentReport& r, const McResult& mc) {
  r.mean_cost = mc.mean;
  r.ci95 = mc.ci;
  r.times = mc.times;
  r.cost_to_go = mc.cost_to_go;
  if (!mc.occupancy.empty()) {
    r.stats["mean_occupancy"] = sample_mean(mc.occupancy);
    r.stats["occupancy_ci95"] = ci95(mc.occupancy);
  }
}

struct Trained {
  std::shared_ptr<const WindowPolicy> policy;
  ValueAnsatz ansatz;
  TrainHistory history;
};

/// Trains, records the history and the ansatz under `tag`, and fills the
/// training fields of `r`. The policy is null when training failed.
Trained train_logged(const ControlProblem& p, const Scenario& s, const RunOptions& opt,
                     const std::string& tag, ExperimentReport& r) {
  TrainConfig cfg = s.train;
  cfg.exec = opt.exec;
  Trained t;
  try {
    TrainResult res = train(p, cfg);
    t.policy = res.policy;
    t.ansatz = std::move(res.ansatz);
    t.history = std::move(res.history);
  } catch (const TrainError& e) {
    t.history = e.history();
    r.error = e.what();
  } catch (const Error& e) {
    r.error = e.what();
  }
  r.stats["train_iterations"] = static_cast<double>(t.history.size());
  r.stats["train_converged"] = t.history.converged ? 1.0 : 0.0;
  if (!t.history.records.empty()) r.stats["train_J"] = t.history.records.back().J;
  if (!opt.out_dir.empty()) {
    auto log = open_out(opt, "train_log_" + tag + ".txt");
    write_train_log(log, t.history);
    if (t.policy) t.ansatz.save((fs::path(opt.out_dir) / ("ansatz_" + tag + ".json")).string());
  }
  return t;
}

void write_curves(const RunOptions& opt, const std::string& name,
                  const std::vector<const ExperimentReport*>& reports) {
  if (opt.out_dir.empty()) return;
  const std::vector<double>* times = nullptr;
  for (const auto* r : reports) {
    if (!r->times.empty()) times = &r->times;
  }
  if (!times) return;
  auto out = open_out(opt, name);
  out << "t";
  for (const auto* r : reports) out << "," << r->method;
  out << "\n";
  for (std::size_t k = 0; k < times->size(); ++k) {
    out << (*times)[k];
    for (const auto* r : reports) {
      out << ",";
      if (k < r->cost_to_go.size()) out << r->cost_to_go[k];
    }
    out << "\n";
  }
}

std::vector<BenchmarkRow> benchmark_rows(const Scenario& s, const std::vector<ExperimentReport>& rs) {
  std::vector<BenchmarkRow> rows;
  for (const auto& r : rs) {
    if (!r.error.empty()) continue;
    rows.push_back({s.id, r.n_obs, r.method, r.mean_cost, r.ci95,
                    r.method == "fosoc" ? 0 : s.M_eval, s.eval_seed});
  }
  return rows;
}

/// d_m = a_m - b_m.
std::pair<double, double> paired(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return {sample_mean(d), ci95(d)};
}

}  // namespace

json to_json(const ExperimentReport& r) {
  json j;
  j["scenario"] = r.scenario_id;
  j["method"] = r.method;
  j["n_obs"] = r.n_obs;
  j["mean_cost"] = r.mean_cost;
  j["ci95"] = r.ci95;
  j["times"] = r.times;
  j["cost_to_go"] = r.cost_to_go;
  j["runtime_seconds"] = r.runtime_seconds;
  j["seeds"] = {{"train", r.train_seed}, {"eval", r.eval_seed}};
  j["config_hash"] = r.config_hash;
  j["stats"] = r.stats;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

void write_report_json(const std::string& path, const std::vector<ExperimentReport>& reports) {
  json a = json::array();
  for (const auto& r : reports) a.push_back(to_json(r));
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << a.dump(2) << "\n";
}

ExperimentReport run_train(const Scenario& s, std::size_t n_obs, const RunOptions& opt) {
  const auto t0 = Clock::now();
  const ControlProblem p = s.problem(s.schedule(n_obs));
  ExperimentReport r = base_report(s, "particle", n_obs);
  Trained t = train_logged(p, s, opt, "N" + std::to_string(n_obs), r);
  if (t.policy) fill(r, evaluate(s, p, *t.policy, opt.exec));
  r.runtime_seconds = seconds_since(t0);
  return r;
}

std::vector<ExperimentReport> run_table1(const Scenario& s, const RunOptions& opt) {
  std::vector<ExperimentReport> out;
  if (s.n_obs_list.empty()) return out;
  if (!s.lqg || !s.lqg->fixed_eps) throw ConfigError("table1 needs an LQG scenario with fixed_eps");
  const LqgSpec& spec = *s.lqg;
  const RiccatiSolution ricc = riccati_solve(spec.A, spec.B, spec.Q, spec.R, spec.Q_T, s.horizon,
                                             s.riccati_dt);
  const double fosoc = fosoc_value(spec, s.horizon, ricc);

  std::ostringstream table;
  table << std::setprecision(12);
  table << "N_o,particle_mean,particle_ci95,separation_mean,separation_ci95,fosoc\n";
  for (std::size_t n_obs : s.n_obs_list) {
    const auto obs = s.schedule(n_obs);
    const ControlProblem p = s.problem(obs);

    auto t0 = Clock::now();
    ExperimentReport part = base_report(s, "particle", n_obs);
    Trained t = train_logged(p, s, opt, "N" + std::to_string(n_obs), part);
    if (t.policy) {
      try {
        fill(part, evaluate(s, p, *t.policy, opt.exec));
      } catch (const Error& e) {
        part.error = e.what();
      }
    }
    part.runtime_seconds = seconds_since(t0);

    t0 = Clock::now();
    ExperimentReport sep = base_report(s, "separation", n_obs);
    fill(sep, evaluate(s, p, *separation_policy(spec, ricc, obs, s.eval_dt), opt.exec));
    sep.runtime_seconds = seconds_since(t0);

    ExperimentReport fo = base_report(s, "fosoc", n_obs);
    fo.mean_cost = fosoc;

    table << n_obs << ",";
    if (part.error.empty()) {
      table << part.mean_cost << "," << part.ci95;
    } else {
      table << "NA,NA";
    }
    table << "," << sep.mean_cost << "," << sep.ci95 << "," << fosoc << "\n";
    write_curves(opt, "cost_to_go_N" + std::to_string(n_obs) + ".csv", {&part, &sep});
    out.push_back(std::move(part));
    out.push_back(std::move(sep));
    out.push_back(std::move(fo));
  }
  if (!opt.out_dir.empty()) {
    open_out(opt, "table1.csv") << table.str();
    auto bench = open_out(opt, "benchmark.csv");
    write_benchmark_csv(bench, benchmark_rows(s, out));
  }
  return out;
}

std::vector<ExperimentReport> run_controlled_noise(const Scenario& s, const RunOptions& opt) {
  const auto obs = s.schedule();
  const ControlProblem adaptive_problem = s.problem(obs);
  std::vector<ExperimentReport> out;
  for (double b : s.baseline_betas) {
    const auto t0 = Clock::now();
    const Vector beta = Vector::Constant(static_cast<Eigen::Index>(adaptive_problem.dim_beta), b);
    const ControlProblem p = s.problem_with_beta(obs, beta);
    ExperimentReport r = base_report(s, beta_label(b), obs.size());
    std::ostringstream tag;
    tag << "beta" << b;
    Trained t = train_logged(p, s, opt, tag.str(), r);
    if (t.policy) fill(r, evaluate(s, p, *t.policy, opt.exec));
    r.runtime_seconds = seconds_since(t0);
    out.push_back(std::move(r));
  }
  const auto t0 = Clock::now();
  ExperimentReport r = base_report(s, "adaptive", obs.size());
  Trained t = train_logged(adaptive_problem, s, opt, "adaptive", r);
  if (t.policy) {
    fill(r, evaluate(s, adaptive_problem, *t.policy, opt.exec));
    if (!opt.out_dir.empty()) {
      std::vector<Rollout> dump;
      for (std::size_t m = 0; m < s.n_dump; ++m) {
        dump.push_back(rollout(adaptive_problem, *t.policy, s.eval_dt, s.eval_seed, m));
      }
      auto st = open_out(opt, "adaptive_states.csv");
      auto ob = open_out(opt, "adaptive_observations.csv");
      write_rollout_csv(st, ob, dump);
    }
  }
  r.runtime_seconds = seconds_since(t0);
  out.push_back(std::move(r));

  if (!opt.out_dir.empty()) {
    auto csv = open_out(opt, "noise_study.csv");
    write_benchmark_csv(csv, benchmark_rows(s, out));
    std::vector<const ExperimentReport*> ptrs;
    for (const auto& x : out) ptrs.push_back(&x);
    write_curves(opt, "cost_to_go.csv", ptrs);
  }
  return out;
}

std::vector<ExperimentReport> run_obstacle(const Scenario& s, const RunOptions& opt) {
  const auto obs = s.schedule();
  const ControlProblem p = s.problem(obs);
  std::vector<ExperimentReport> out;

  auto t0 = Clock::now();
  ExperimentReport zero = base_report(s, "zero_control", obs.size());
  const PolicyPtr zero_policy = zero_control_policy(p);
  const McResult mz = evaluate(s, p, *zero_policy, opt.exec);
  fill(zero, mz);
  zero.runtime_seconds = seconds_since(t0);

  t0 = Clock::now();
  ExperimentReport part = base_report(s, "particle", obs.size());
  Trained t = train_logged(p, s, opt, "obstacle", part);
  McResult mp;
  if (t.policy) {
    mp = evaluate(s, p, *t.policy, opt.exec);
    fill(part, mp);
    const auto [dc, dc_ci] = paired(mp.costs, mz.costs);
    const auto [dv, dv_ci] = paired(mp.occupancy, mz.occupancy);
    part.stats["paired_cost_diff"] = dc;
    part.stats["paired_cost_diff_ci95"] = dc_ci;
    part.stats["paired_occupancy_diff"] = dv;
    part.stats["paired_occupancy_diff_ci95"] = dv_ci;
  }
  part.runtime_seconds = seconds_since(t0);

  if (!opt.out_dir.empty()) {
    auto csv = open_out(opt, "obstacle.csv");
    csv << "scenario,method,mean_cost,ci95,mean_occupancy,occupancy_ci95,M_eval,seed\n";
    for (const auto* r : {&part, &zero}) {
      if (!r->error.empty()) continue;
      csv << s.id << "," << r->method << "," << r->mean_cost << "," << r->ci95 << ","
          << r->stats.at("mean_occupancy") << "," << r->stats.at("occupancy_ci95") << ","
          << s.M_eval << "," << s.eval_seed << "\n";
    }
    if (part.error.empty()) {
      csv << s.id << ",paired_difference," << part.stats["paired_cost_diff"] << ","
          << part.stats["paired_cost_diff_ci95"] << "," << part.stats["paired_occupancy_diff"] << ","
          << part.stats["paired_occupancy_diff_ci95"] << "," << s.M_eval << "," << s.eval_seed
          << "\n";
    }
    write_curves(opt, "cost_to_go.csv", {&part, &zero});

    // x for scalar states, the Euclidean norm otherwise.
    auto traj = open_out(opt, "trajectories.csv");
    traj << "method,trajectory_id,t," << (p.dim_x == 1 ? "x" : "norm_x") << "\n";
    std::vector<std::pair<std::string, const PolicyPair*>> pols{{"zero_control", zero_policy.get()}};
    if (t.policy) pols.insert(pols.begin(), {"particle", t.policy.get()});
    for (const auto& [name, pol] : pols) {
      for (std::size_t m = 0; m < s.n_dump; ++m) {
        const Rollout r = rollout(p, *pol, s.eval_dt, s.eval_seed, m);
        for (std::size_t k = 0; k < r.times.size(); ++k) {
          const double v = p.dim_x == 1 ? r.states[k][0] : r.states[k].norm();
          traj << name << "," << m << "," << r.times[k] << "," << v << "\n";
        }
      }
    }
  }
  out.push_back(std::move(part));
  out.push_back(std::move(zero));
  return out;
}

std::vector<OracleReport> run_oracle_suite(const std::string& instances, const RunOptions& opt) {
  std::vector<fs::path> files;
  if (fs::is_directory(instances)) {
    for (const auto& e : fs::directory_iterator(instances)) {
      if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  } else if (fs::exists(instances)) {
    files.push_back(instances);
  } else {
    throw ConfigError("oracle instances not found: " + instances);
  }

  std::vector<OracleReport> out;
  for (const auto& f : files) {
    OracleReport rep;
    rep.instance = f.stem().string();
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      const json j = json::parse(ss.str());
      rep.expect_invalid = j.value("expect_invalid", false);
    } catch (const json::exception&) {
    }
    FiniteChain chain;
    try {
      chain = FiniteChain::from_json(ss.str());
    } catch (const ConfigError& e) {
      rep.rejected = true;
      rep.message = f.filename().string() + ": " + e.what();
      rep.hard_ok = rep.expect_invalid;
      out.push_back(std::move(rep));
      continue;
    }
    if (rep.expect_invalid) {
      rep.message = "instance was expected to be rejected";
      out.push_back(std::move(rep));
      continue;
    }
    const ExactDpResult dp = exact_dp(chain);
    bool enumerate = chain.obs_times.size() == 1;
    try {
      rep.diag = check_invariants(chain, dp, enumerate);
    } catch (const SizeError& e) {
      rep.diag = check_invariants(chain, dp, false);
      rep.message = e.what();
    }
    const auto [pm, pci] = particle_controller_cost(chain, 20000, 200, 11);
    rep.particle_mean = pm;
    rep.particle_ci = pci;
    const auto& d = rep.diag;
    rep.hard_ok = d.envelope_max_err <= kOracleTol && d.pairing_max_err <= kOracleTol &&
                  d.fo_bound_max_violation <= kOracleTol &&
                  d.hamiltonian_argmin_mismatch <= kOracleTol &&
                  (d.enumeration_err < 0.0 || d.enumeration_err <= kOracleTol) &&
                  pm >= d.V0 - pci;
    if (!opt.out_dir.empty()) {
      auto tree = open_out(opt, "policy_tree_" + rep.instance + ".csv");
      write_policy_tree(tree, dp);
    }
    out.push_back(std::move(rep));
  }

  if (!opt.out_dir.empty()) {
    auto csv = open_out(opt, "oracle.csv");
    csv << std::setprecision(6);
    csv << "instance,status,V0,envelope_err,pairing_err,fo_bound_violation,hamiltonian_mismatch,"
           "enumeration_err,argmin_disagreements,observation_nodes,tree_nodes,particle_mean,"
           "particle_ci95\n";
    for (const auto& r : out) {
      const char* status = r.rejected ? (r.expect_invalid ? "rejected_as_expected" : "rejected")
                                      : (r.hard_ok ? "pass" : "fail");
      csv << r.instance << "," << status;
      if (r.rejected || r.expect_invalid) {
        csv << ",,,,,,,,,,,\n";
        continue;
      }
      const auto& d = r.diag;
      csv << "," << std::setprecision(15) << d.V0 << std::setprecision(6) << ","
          << d.envelope_max_err << "," << d.pairing_max_err << "," << d.fo_bound_max_violation << ","
          << d.hamiltonian_argmin_mismatch << ",";
      if (d.enumeration_err >= 0.0) csv << d.enumeration_err;
      csv << "," << d.argmin_disagreements << "," << d.observation_nodes << "," << d.tree_nodes
          << "," << r.particle_mean << "," << r.particle_ci << "\n";
    }
  }
  return out;
}

bool oracle_suite_passed(const std::vector<OracleReport>& reports) {
  return std::all_of(reports.begin(), reports.end(), [](const OracleReport& r) { return r.hard_ok; });
}

std::vector<ExperimentReport> run_evaluate(const Scenario& s, const std::string& ansatz_path,
                                           const RunOptions& opt) {
  std::vector<ExperimentReport> out;
  std::vector<double> obs = s.schedule();
  std::optional<ValueAnsatz> ansatz;
  if (!ansatz_path.empty()) {
    ansatz = ValueAnsatz::load(ansatz_path);
    obs = s.schedule(ansatz->theta_post.size());
  }
  const ControlProblem p = s.problem(obs);
  if (ansatz) {
    const auto t0 = Clock::now();
    ExperimentReport r = base_report(s, "particle", obs.size());
    TrainConfig cfg = s.train;
    cfg.exec = opt.exec;
    fill(r, evaluate(s, p, *policy_from_ansatz(p, cfg, *ansatz), opt.exec));
    r.runtime_seconds = seconds_since(t0);
    out.push_back(std::move(r));
  }
  if (s.lqg && s.lqg->fixed_eps) {
    const auto t0 = Clock::now();
    const LqgSpec& spec = *s.lqg;
    const RiccatiSolution ricc = riccati_solve(spec.A, spec.B, spec.Q, spec.R, spec.Q_T, s.horizon,
                                               s.riccati_dt);
    ExperimentReport r = base_report(s, "separation", obs.size());
    fill(r, evaluate(s, p, *separation_policy(spec, ricc, obs, s.eval_dt), opt.exec));
    r.runtime_seconds = seconds_since(t0);
    out.push_back(std::move(r));
    ExperimentReport fo = base_report(s, "fosoc", obs.size());
    fo.mean_cost = fosoc_value(spec, s.horizon, ricc);
    out.push_back(std::move(fo));
  }
  const auto t0 = Clock::now();
  ExperimentReport z = base_report(s, "zero_control", obs.size());
  fill(z, evaluate(s, p, *zero_control_policy(p), opt.exec));
  z.runtime_seconds = seconds_since(t0);
  out.push_back(std::move(z));
  if (!opt.out_dir.empty()) {
    auto csv = open_out(opt, "evaluate.csv");
    write_benchmark_csv(csv, benchmark_rows(s, out));
    std::vector<const ExperimentReport*> ptrs;
    for (const auto& x : out) {
      if (!x.cost_to_go.empty()) ptrs.push_back(&x);
    }
    write_curves(opt, "cost_to_go.csv", ptrs);
  }
  return out;
}

void export_ansatz_csv(const std::string& ansatz_path, const std::string& csv_path) {
  const ValueAnsatz a = ValueAnsatz::load(ansatz_path);
  std::ofstream out(csv_path);
  if (!out) throw Error("cannot write " + csv_path);
  out << std::setprecision(17);
  const std::size_t F = a.basis.n_features();
  out << "kind,index,t";
  for (std::size_t i = 0; i < F; ++i) {
    out << ",m";
    for (std::size_t v : a.basis.monomial(i)) out << "_" << v;
  }
  out << "\n";
  auto row = [&](const char* kind, std::size_t idx, const std::string& t, const Vector& th) {
    out << kind << "," << idx << "," << t;
    for (Eigen::Index i = 0; i < th.size(); ++i) out << "," << th[i];
    out << "\n";
  };
  for (std::size_t k = 0; k < a.theta.size(); ++k) {
    std::ostringstream t;
    t << std::setprecision(17) << a.time_nodes.at(k);
    row("node", k, t.str(), a.theta[k]);
  }
  // Post-observation coefficients are indexed by observation, not by node.
  for (const auto& [n, th] : a.theta_post) row("post", n, "", th);
}

}  // namespace posoc
