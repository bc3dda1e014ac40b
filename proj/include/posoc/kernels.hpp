#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "posoc/sde.hpp"

// Hot loops, each in a serial reference form and an OpenMP form. Work is cut
// into fixed chunks and partial results are combined in chunk order, so the
// two forms agree bit for bit whatever the thread count.

namespace posoc {

inline constexpr std::size_t kChunk = 1024;

struct McOptions {
  std::size_t M = 1000;
  double dt = 0.01;
  std::uint64_t seed = 0;
  /// Trajectory m uses stream id stream_offset + m.
  std::uint64_t stream_offset = 0;
};

struct McResult {
  double mean = 0.0;
  double ci = 0.0;  // 1.96 std / sqrt(M)
  std::vector<double> costs;
  /// Time spent inside the obstacle region per trajectory (empty without obstacle).
  std::vector<double> occupancy;
  std::vector<double> times;
  /// Mean remaining pathwise cost at every grid node; entry 0 equals the mean.
  std::vector<double> cost_to_go;
};

/// Half-width of the 95% interval of the sample mean.
double ci95(const std::vector<double>& v);
double sample_mean(const std::vector<double>& v);

namespace serial {
McResult monte_carlo(const ControlProblem& problem, const PolicyPair& policy, const McOptions& opt);
void em_sweep(std::vector<Vector>& states, std::vector<RngStream>& rngs,
              const std::function<Vector(std::size_t, const Vector&)>& alpha, double t, double h,
              const ControlProblem& problem);
void gram(const Matrix& X, const Vector& y, Matrix& G, Vector& r);
}  // namespace serial

namespace omp {
McResult monte_carlo(const ControlProblem& problem, const PolicyPair& policy, const McOptions& opt);
void em_sweep(std::vector<Vector>& states, std::vector<RngStream>& rngs,
              const std::function<Vector(std::size_t, const Vector&)>& alpha, double t, double h,
              const ControlProblem& problem);
void gram(const Matrix& X, const Vector& y, Matrix& G, Vector& r);
}  // namespace omp

McResult monte_carlo(const ControlProblem& problem, const PolicyPair& policy, const McOptions& opt,
                     Execution exec = Execution::parallel);
/// One Euler-Maruyama step for every particle, each on its own stream.
void em_sweep(std::vector<Vector>& states, std::vector<RngStream>& rngs,
              const std::function<Vector(std::size_t, const Vector&)>& alpha, double t, double h,
              const ControlProblem& problem, Execution exec = Execution::parallel);
/// G = X'X, r = X'y.
void gram(const Matrix& X, const Vector& y, Matrix& G, Vector& r,
          Execution exec = Execution::parallel);

namespace detail {
/// Per-trajectory work shared by both Monte Carlo forms.
struct TrajectoryTotals {
  double cost = 0.0;
  double occupancy = 0.0;
};
TrajectoryTotals summarize(const ControlProblem& problem, const Rollout& r, double* remaining);
McResult finish(std::vector<double> costs, std::vector<double> occupancy,
                const std::vector<std::vector<double>>& chunk_curves, const TimeGrid& grid,
                bool has_obstacle);
}  // namespace detail

}  // namespace posoc
