#include <omp.h>

#include <string>

#include "posoc/kernels.hpp"

namespace posoc::omp {

McResult monte_carlo(const ControlProblem& problem, const PolicyPair& policy,
                     const McOptions& opt) {
  if (opt.M < 2) throw ConfigError("Monte Carlo evaluation needs at least two trajectories");
  const TimeGrid grid(problem.horizon, problem.obs_times, opt.dt);
  const std::size_t n_chunks = (opt.M + kChunk - 1) / kChunk;
  std::vector<double> costs(opt.M), occ(opt.M);
  std::vector<std::vector<double>> curves(n_chunks, std::vector<double>(grid.n_nodes(), 0.0));
  std::vector<std::string> failures(opt.M);
  const auto chunks = static_cast<long>(n_chunks);

#pragma omp parallel for schedule(dynamic, 1)
  for (long c = 0; c < chunks; ++c) {
    const auto cu = static_cast<std::size_t>(c);
    const std::size_t end = std::min(opt.M, (cu + 1) * kChunk);
    for (std::size_t m = cu * kChunk; m < end; ++m) {
      try {
        const Rollout r = rollout(problem, policy, grid, opt.seed, opt.stream_offset + m);
        const auto t = detail::summarize(problem, r, curves[cu].data());
        costs[m] = t.cost;
        occ[m] = t.occupancy;
      } catch (const Error& e) {
        failures[m] = e.what();
      }
    }
  }
  std::size_t n_failed = 0;
  std::string first;
  for (std::size_t m = 0; m < opt.M; ++m) {
    if (failures[m].empty()) continue;
    if (n_failed++ == 0) first = std::to_string(m) + ": " + failures[m];
  }
  if (n_failed > 0) {
    throw RolloutError(std::to_string(n_failed) + " rollouts failed; first " + first);
  }
  return detail::finish(std::move(costs), std::move(occ), curves, grid,
                        problem.obstacle.has_value());
}

void em_sweep(std::vector<Vector>& states, std::vector<RngStream>& rngs,
              const std::function<Vector(std::size_t, const Vector&)>& alpha, double t, double h,
              const ControlProblem& problem) {
  const auto M = static_cast<long>(states.size());
  bool failed = false;
  std::string what;
#pragma omp parallel
  {
    Vector noise(static_cast<Eigen::Index>(problem.dim_w));
#pragma omp for schedule(static)
    for (long i = 0; i < M; ++i) {
      const auto m = static_cast<std::size_t>(i);
      try {
        rngs[m].normals(noise);
        states[m] = em_step(states[m], t, alpha(m, states[m]), h, noise, problem, m);
      } catch (const Error& e) {
#pragma omp critical
        {
          if (!failed) what = e.what();
          failed = true;
        }
      }
    }
  }
  if (failed) throw PropagationError(what, 0);
}

void gram(const Matrix& X, const Vector& y, Matrix& G, Vector& r) {
  const Eigen::Index F = X.cols();
  const auto M = static_cast<std::size_t>(X.rows());
  const std::size_t n_chunks = (M + kChunk - 1) / kChunk;
  std::vector<Matrix> Gs(n_chunks);
  std::vector<Vector> rs(n_chunks);
  const auto chunks = static_cast<long>(n_chunks);
#pragma omp parallel for schedule(static)
  for (long c = 0; c < chunks; ++c) {
    const auto b = static_cast<Eigen::Index>(c) * static_cast<Eigen::Index>(kChunk);
    const auto n = std::min<Eigen::Index>(static_cast<Eigen::Index>(kChunk), X.rows() - b);
    Gs[c].setZero(F, F);
    Gs[c].selfadjointView<Eigen::Lower>().rankUpdate(X.middleRows(b, n).transpose());
    rs[c] = X.middleRows(b, n).transpose() * y.segment(b, n);
  }
  G.setZero(F, F);
  r.setZero(F);
  // Same association order as the serial loop: ((0 + c0) + c1) + ...
  for (std::size_t c = 0; c < n_chunks; ++c) {
    G.triangularView<Eigen::Lower>() += Gs[c];
    r += rs[c];
  }
  G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
}

}  // namespace posoc::omp
