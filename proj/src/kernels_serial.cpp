#include <cmath>
#include <string>

#include "posoc/kernels.hpp"

namespace posoc {

double sample_mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double ci95(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  // shifting by a sample keeps identical samples at exactly zero spread
  const double x0 = v.front();
  double m = 0.0;
  for (double x : v) m += x - x0;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - x0 - m) * (x - x0 - m);
  const double var = ss / static_cast<double>(v.size() - 1);
  return 1.96 * std::sqrt(var / static_cast<double>(v.size()));
}

namespace detail {

TrajectoryTotals summarize(const ControlProblem& problem, const Rollout& r, double* remaining) {
  TrajectoryTotals out;
  out.cost = r.total_cost();
  double spent = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < r.states.size(); ++k) {
    remaining[k] += out.cost - spent;
    if (n < r.obs_nodes.size() && r.obs_nodes[n] == k) spent += r.impulse_costs[n++];
    if (k < r.stage_costs.size()) {
      spent += r.stage_costs[k];
      if (problem.obstacle) {
        const auto& ob = *problem.obstacle;
        const double t = r.times[k];
        const double rad = r.states[k].norm();
        if (t >= ob.t_min && t <= ob.t_max && rad >= ob.r_in && rad <= ob.r_out) {
          out.occupancy += r.times[k + 1] - r.times[k];
        }
      }
    }
  }
  return out;
}

McResult finish(std::vector<double> costs, std::vector<double> occupancy,
                const std::vector<std::vector<double>>& chunk_curves, const TimeGrid& grid,
                bool has_obstacle) {
  McResult res;
  const double M = static_cast<double>(costs.size());
  res.times = grid.times();
  res.cost_to_go.assign(grid.n_nodes(), 0.0);
  for (const auto& c : chunk_curves) {
    for (std::size_t k = 0; k < c.size(); ++k) res.cost_to_go[k] += c[k];
  }
  for (double& v : res.cost_to_go) v /= M;
  // Chunked sum so the mean is the same number as cost_to_go[0].
  res.mean = res.cost_to_go.empty() ? sample_mean(costs) : res.cost_to_go[0];
  res.ci = ci95(costs);
  res.costs = std::move(costs);
  if (has_obstacle) res.occupancy = std::move(occupancy);
  return res;
}

}  // namespace detail

namespace serial {

McResult monte_carlo(const ControlProblem& problem, const PolicyPair& policy,
                     const McOptions& opt) {
  if (opt.M < 2) throw ConfigError("Monte Carlo evaluation needs at least two trajectories");
  const TimeGrid grid(problem.horizon, problem.obs_times, opt.dt);
  const std::size_t n_chunks = (opt.M + kChunk - 1) / kChunk;
  std::vector<double> costs(opt.M), occ(opt.M);
  std::vector<std::vector<double>> curves(n_chunks, std::vector<double>(grid.n_nodes(), 0.0));
  std::vector<std::string> failures;
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t end = std::min(opt.M, (c + 1) * kChunk);
    for (std::size_t m = c * kChunk; m < end; ++m) {
      try {
        const Rollout r = rollout(problem, policy, grid, opt.seed, opt.stream_offset + m);
        const auto t = detail::summarize(problem, r, curves[c].data());
        costs[m] = t.cost;
        occ[m] = t.occupancy;
      } catch (const Error& e) {
        failures.push_back(std::to_string(m) + ": " + e.what());
      }
    }
  }
  if (!failures.empty()) {
    std::string msg = std::to_string(failures.size()) + " rollouts failed; first " + failures[0];
    throw RolloutError(msg);
  }
  return detail::finish(std::move(costs), std::move(occ), curves, grid,
                        problem.obstacle.has_value());
}

void em_sweep(std::vector<Vector>& states, std::vector<RngStream>& rngs,
              const std::function<Vector(std::size_t, const Vector&)>& alpha, double t, double h,
              const ControlProblem& problem) {
  Vector noise(static_cast<Eigen::Index>(problem.dim_w));
  for (std::size_t m = 0; m < states.size(); ++m) {
    rngs[m].normals(noise);
    states[m] = em_step(states[m], t, alpha(m, states[m]), h, noise, problem, m);
  }
}

void gram(const Matrix& X, const Vector& y, Matrix& G, Vector& r) {
  const Eigen::Index F = X.cols();
  G.setZero(F, F);
  r.setZero(F);
  const auto M = static_cast<std::size_t>(X.rows());
  for (std::size_t c = 0; c * kChunk < M; ++c) {
    const auto b = static_cast<Eigen::Index>(c * kChunk);
    const auto n = static_cast<Eigen::Index>(std::min(kChunk, M - c * kChunk));
    Matrix Gc = Matrix::Zero(F, F);
    Gc.selfadjointView<Eigen::Lower>().rankUpdate(X.middleRows(b, n).transpose());
    const Vector rc = X.middleRows(b, n).transpose() * y.segment(b, n);
    G.triangularView<Eigen::Lower>() += Gc;
    r += rc;
  }
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
}

}  // namespace serial

McResult monte_carlo(const ControlProblem& problem, const PolicyPair& policy, const McOptions& opt,
                     Execution exec) {
  return exec == Execution::serial ? serial::monte_carlo(problem, policy, opt)
                                   : omp::monte_carlo(problem, policy, opt);
}

void em_sweep(std::vector<Vector>& states, std::vector<RngStream>& rngs,
              const std::function<Vector(std::size_t, const Vector&)>& alpha, double t, double h,
              const ControlProblem& problem, Execution exec) {
  if (exec == Execution::serial) {
    serial::em_sweep(states, rngs, alpha, t, h, problem);
  } else {
    omp::em_sweep(states, rngs, alpha, t, h, problem);
  }
}

void gram(const Matrix& X, const Vector& y, Matrix& G, Vector& r, Execution exec) {
  if (exec == Execution::serial) {
    serial::gram(X, y, G, r);
  } else {
    omp::gram(X, y, G, r);
  }
}

}  // namespace posoc
