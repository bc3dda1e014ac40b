#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "posoc/model.hpp"

namespace posoc {

/// x + b dt + sigma sqrt(dt) noise. Throws PropagationError on a non-finite result.
Vector em_step(const Vector& x, double t, const Vector& alpha, double dt, const Vector& noise,
               const ControlProblem& problem, std::size_t trajectory = 0);

/// Per-trajectory decision maker. Controllers may carry state (a filter, say)
/// and therefore are created fresh for every trajectory.
class Controller {
 public:
  virtual ~Controller() = default;
  /// Continuous control on grid step `step` starting at time t.
  virtual Vector alpha(std::size_t step, double t, const WindowState& z) = 0;
  /// Discrete control at observation n given the pre-observation window.
  virtual Vector beta(std::size_t n, const WindowState& z_pre) = 0;
  /// Called after observation n has been realised.
  virtual void observe(std::size_t /*n*/, const Vector& /*y*/, const Vector& /*beta*/) {}
  /// Called after the state moved from t0 to t1 under control a.
  virtual void advance(double /*t0*/, double /*t1*/, const Vector& /*a*/) {}
};

enum class PolicyMode { closed_form_lqg, grid_search };

/// A pair (alpha policy, beta policy) as a controller factory. Immutable and
/// shareable between threads; each trajectory calls start().
class PolicyPair {
 public:
  virtual ~PolicyPair() = default;
  virtual std::unique_ptr<Controller> start() const = 0;
  /// Window length K the policy conditions on.
  virtual std::size_t window_length() const { return 1; }
  virtual PolicyMode mode() const { return PolicyMode::closed_form_lqg; }
  virtual std::string name() const = 0;
};

using PolicyPtr = std::shared_ptr<const PolicyPair>;

/// alpha and beta constant in time and window.
PolicyPtr constant_policy(const Vector& alpha, const Vector& beta, std::string name = "constant");
/// alpha = 0, beta = first admissible candidate of the problem.
PolicyPtr zero_control_policy(const ControlProblem& problem);

struct Rollout {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<Vector> observations;
  std::vector<std::size_t> obs_nodes;
  std::vector<WindowState> windows;
  std::vector<Vector> controls_alpha;
  std::vector<Vector> controls_beta;
  std::vector<double> stage_costs;
  std::vector<double> impulse_costs;
  double terminal_cost_value = 0.0;

  double total_cost() const;
};

/// Noise layout shared by every simulator: lane 0 of (seed, stream_id) gives
/// the initial draw and then the Brownian increments, lane 1 the observation noise.
Rollout rollout(const ControlProblem& problem, const PolicyPair& policy, const TimeGrid& grid,
                std::uint64_t seed, std::uint64_t stream_id);
Rollout rollout(const ControlProblem& problem, const PolicyPair& policy, double dt,
                std::uint64_t seed, std::uint64_t stream_id);

void write_rollout_csv(std::ostream& states_out, std::ostream& obs_out,
                       const std::vector<Rollout>& rollouts);

}  // namespace posoc
