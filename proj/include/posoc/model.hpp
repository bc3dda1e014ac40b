#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include "posoc/core.hpp"
#include "posoc/rng.hpp"

namespace posoc {

/// Axis-aligned box. Empty bounds mean unbounded.
struct BoxSet {
  Vector lower;
  Vector upper;

  bool bounded() const { return lower.size() > 0; }
  Vector project(const Vector& v) const;
  bool contains(const Vector& v, double tol = 0.0) const;
};

/// Drift b(t,x,a) = b0(t,x) + B a and running cost f = f0(t,x) + a'Ra/2 with
/// control-independent diffusion. When present, the belief-averaged
/// Hamiltonian has the closed-form minimiser a = -R^{-1} B' E[grad p].
struct ControlAffine {
  Matrix B;
  Matrix R;
};

struct InitialLaw {
  std::function<Vector(RngStream&)> sample;
  std::optional<Vector> mean;
  std::optional<Matrix> cov;
};

/// Time-gated spherical-shell penalty plus quadratic regulation costs.
struct ObstacleSpec {
  double t_min = 0.3;
  double t_max = 0.6;
  double r_in = 0.1;
  double r_out = 2.0;
  double magnitude = 1000.0;
  Vector x_star;
  Matrix Q;
  Matrix Q_T;
  Matrix R;
  // Dynamics and sensing: dX = a dt + sigma dW, Y = C X + eps xi.
  Matrix sigma;
  Matrix C;
  double eps = 0.1;
  Vector m0;
  Matrix Sigma0;

  void validate(double horizon) const;
};

struct LqgSpec {
  Matrix A, B, C, sigma;
  Matrix Q, Q_T, R;
  Vector m0;
  Matrix Sigma0;
  /// Observation-cost weights, one vector of size dim_beta per observation.
  /// A single entry is broadcast to every observation.
  std::vector<Vector> kappa;
  /// Exogenous observations: beta fixed at this level.
  std::optional<double> fixed_eps;
  /// Candidate grid when beta is a decision variable.
  std::vector<Vector> beta_grid;

  std::size_t dim_x() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t dim_y() const { return static_cast<std::size_t>(C.rows()); }
  std::size_t dim_beta() const;
  Vector kappa_at(std::size_t obs_index) const;
  void validate() const;
};

/// Full problem definition. Immutable after construction; safe to share
/// between threads.
struct ControlProblem {
  std::size_t dim_x = 0;
  std::size_t dim_alpha = 0;
  std::size_t dim_beta = 0;
  std::size_t dim_y = 0;
  std::size_t dim_w = 0;
  double horizon = 1.0;
  std::vector<double> obs_times;

  std::function<Vector(double t, const Vector& x, const Vector& a)> drift;
  std::function<Matrix(double t, const Vector& x, const Vector& a)> diffusion;
  /// log pi_n(y | x, beta)
  std::function<double(const Vector& y, const Vector& x, const Vector& beta, std::size_t n)>
      likelihood_logdensity;
  /// h_n(x, beta, xi) with xi standard normal of size dim_y.
  std::function<Vector(const Vector& x, const Vector& beta, std::size_t n, const Vector& xi)>
      observation_sampler;
  std::function<double(double t, const Vector& x, const Vector& a)> running_cost;
  std::function<double(std::size_t n, const Vector& x, const Vector& beta)> impulse_cost;
  std::function<double(const Vector& x)> terminal_cost;
  InitialLaw initial_law;

  BoxSet alpha_set;
  std::vector<Vector> beta_set;

  std::optional<ControlAffine> control_affine;
  /// sigma does not depend on (t, x, a).
  bool constant_diffusion = false;
  std::optional<ObstacleSpec> obstacle;
  std::optional<LqgSpec> lqg;

  std::size_t n_obs() const { return obs_times.size(); }
  /// Checks the structural invariants; throws ConfigError.
  void validate() const;
};

ControlProblem make_lqg_problem(const LqgSpec& spec, const std::vector<double>& obs_times,
                                double horizon = 1.0);
ControlProblem make_obstacle_problem(const ObstacleSpec& spec,
                                     const std::vector<double>& obs_times,
                                     double horizon = 1.0);

/// c(beta) = sum_i kappa_i / beta_i. Throws DomainError for beta_i <= 0.
double observation_cost(const Vector& beta, const Vector& kappa);

double obstacle_penalty(double t, const Vector& x, const ObstacleSpec& spec);

/// t_n = n T / (N_o + 1), n = 1..N_o.
std::vector<double> uniform_obs_times(std::size_t n_obs, double horizon = 1.0);

/// Sliding window over the most recent K observations (oldest first).
class WindowState {
 public:
  WindowState() = default;
  WindowState(std::size_t capacity, std::size_t dim_y) : capacity_(capacity), dim_y_(dim_y) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t dim_y() const { return dim_y_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Vector& at(std::size_t i) const { return entries_.at(i); }

  /// K * dim_y vector, missing (older) entries zero-padded at the front.
  Vector flattened() const;
  void flatten_into(double* out) const;

  friend WindowState window_update(const WindowState& z, const Vector& y);
  bool operator==(const WindowState& other) const;

 private:
  std::size_t capacity_ = 0;
  std::size_t dim_y_ = 0;
  std::deque<Vector> entries_;
};

WindowState window_update(const WindowState& z, const Vector& y);

/// Simulation grid on [0, T]; every observation time is a node. Each
/// inter-observation slab is split into equal steps no longer than dt.
class TimeGrid {
 public:
  TimeGrid() = default;
  TimeGrid(double horizon, const std::vector<double>& obs_times, double dt);

  std::size_t n_nodes() const { return times_.size(); }
  std::size_t n_steps() const { return times_.size() - 1; }
  double time(std::size_t k) const { return times_[k]; }
  double step(std::size_t k) const { return times_[k + 1] - times_[k]; }
  const std::vector<double>& times() const { return times_; }
  /// Node index of observation n.
  std::size_t obs_node(std::size_t n) const { return obs_nodes_[n]; }
  /// Observation index at node k, or -1.
  int obs_at(std::size_t k) const { return obs_at_[k]; }
  bool is_obs(std::size_t k) const { return obs_at_[k] >= 0; }
  std::size_t n_obs() const { return obs_nodes_.size(); }
  /// Number of observations strictly before node k.
  std::size_t obs_before(std::size_t k) const;
  /// Node with |t_k - t| <= tol, or throws.
  std::size_t node_of(double t, double tol = 1e-9) const;

  bool operator==(const TimeGrid& other) const { return times_ == other.times_; }

 private:
  std::vector<double> times_;
  std::vector<std::size_t> obs_nodes_;
  std::vector<int> obs_at_;
};

}  // namespace posoc
