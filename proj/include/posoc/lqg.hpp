#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "posoc/filtering.hpp"
#include "posoc/sde.hpp"

namespace posoc {

/// S(t) and the feedback gain K(t) = R^{-1} B' S(t) on a uniform grid.
struct RiccatiSolution {
  std::vector<double> grid;
  std::vector<Matrix> S;
  std::vector<Matrix> K;

  /// Linear interpolation between grid nodes.
  Matrix S_at(double t) const;
  Matrix K_at(double t) const;
};

/// -dS/dt = A'S + SA - S B R^{-1} B' S + Q, S(T) = Q_T, by backward RK4.
RiccatiSolution riccati_solve(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                              const Matrix& Q_T, double T, double dt = 1e-3);

/// Optimal expected cost with full state information.
double fosoc_value(const LqgSpec& spec, double T, const RiccatiSolution& ricc);

/// Kalman filter plus certainty-equivalent feedback a = -K(t) xhat. Needs
/// exogenous observations (spec.fixed_eps).
PolicyPtr separation_policy(const LqgSpec& spec, const RiccatiSolution& ricc,
                            const std::vector<double>& obs_times, double dt);

/// (mean cost, 95% half-width) over M_eval independent rollouts.
std::pair<double, double> evaluate_policy_mc(const ControlProblem& problem,
                                             const PolicyPair& policy, std::size_t M_eval,
                                             double dt, std::uint64_t seed,
                                             Execution exec = Execution::parallel);

struct BenchmarkRow {
  std::string scenario;
  std::size_t n_obs = 0;
  std::string method;  // particle, separation, fosoc
  double mean_cost = 0.0;
  double ci95 = 0.0;
  std::size_t M_eval = 0;
  std::uint64_t seed = 0;
};

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows);

}  // namespace posoc
