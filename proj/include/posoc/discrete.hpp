#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "posoc/core.hpp"

namespace posoc {

/// Finite-state continuous-time chain with discrete observations.
/// Actions a act on the generator, observation actions b on the emissions.
struct FiniteChain {
  std::size_t n_states = 0;
  std::vector<Matrix> rate_matrices;  // per a, S x S generator
  std::vector<Matrix> emissions;      // per b, S x O, rows pi(.|s,b)
  Matrix running_cost;                // S x A
  Matrix observation_cost;            // S x B
  Vector terminal_cost;               // S
  Vector initial_belief;              // S
  std::vector<double> obs_times;
  double horizon = 1.0;
  double dt = 0.05;

  std::size_t n_actions() const { return rate_matrices.size(); }
  std::size_t n_obs_actions() const { return emissions.size(); }
  std::size_t n_symbols() const { return emissions.empty() ? 0 : static_cast<std::size_t>(emissions[0].cols()); }
  /// Generator and emission row sums, sign conditions, dimensions, dt.
  void validate() const;

  static FiniteChain from_json(const std::string& text);
  static FiniteChain load(const std::string& path);
};

using DiscreteBelief = Vector;

DiscreteBelief forward_belief_step(const DiscreteBelief& mu, std::size_t a, double dt,
                                   const FiniteChain& chain);

struct BayesJump {
  DiscreteBelief posterior;
  double L = 0.0;
};
BayesJump bayes_jump(const DiscreteBelief& mu_pre, std::size_t o, std::size_t b,
                     const FiniteChain& chain);

Vector backward_U_step(const Vector& U, std::size_t a, double dt, const FiniteChain& chain);
Vector u_jump(const std::vector<Vector>& U_post, const Vector& c_b, std::size_t b,
              const FiniteChain& chain);
Vector lambda_jump(const std::vector<Vector>& lambda_post, const Vector& c_b, std::size_t b,
                   const DiscreteBelief& mu_pre, const FiniteChain& chain);

struct HamiltonianMin {
  double value = 0.0;
  std::size_t action = 0;
};
HamiltonianMin hamiltonian_continuous(const DiscreteBelief& mu, const Vector& U,
                                      const FiniteChain& chain);
/// Variation of the continuous Hamiltonian in U at its minimiser: G_a' mu.
Vector hamiltonian_flow(const DiscreteBelief& mu, const Vector& U, const FiniteChain& chain);
HamiltonianMin hamiltonian_discrete(const DiscreteBelief& mu_pre, const std::vector<Vector>& U_post,
                                    const FiniteChain& chain);

struct PolicyTreeNode {
  std::size_t grid_node = 0;
  bool post = false;        // after the observation at this node
  int symbol = -1;          // symbol that led here (post nodes)
  int parent = -1;
  std::vector<int> children;
  Vector mu;
  int action = -1;          // a on slab nodes, b on pre-observation nodes
  Vector U;                 // auxiliary cost vector of the plan below this node
  Vector lambda;            // adjoint along the plan
  double V = 0.0;           // expected cost-to-go accumulated over the subtree
  // Pre-observation nodes: continuation vectors and adjoints per symbol.
  // Symbols with zero predictive mass keep the dynamic-programming successor.
  std::vector<Vector> U_post, lambda_post;
};

struct ExactDpResult {
  double V0 = 0.0;
  std::vector<PolicyTreeNode> tree;
  std::vector<double> times;
};

/// Alpha-vector backward induction on the dt-grid with piecewise-constant
/// actions, then forward extraction of the optimal policy tree.
ExactDpResult exact_dp(const FiniteChain& chain, std::size_t max_vectors = 200000);

/// Brute force over every pre-observation action path and b, with each
/// symbol branch minimised over all post-observation paths. One observation.
double enumerate_value(const FiniteChain& chain, std::size_t max_paths = 1u << 22);

/// Optimal cost-to-go vectors under full state information, per grid node;
/// at observation nodes `pre` holds the value before the observation cost.
struct FullyObservedValue {
  std::vector<Vector> pre;
  std::vector<Vector> post;
};
FullyObservedValue fully_observed_dp(const FiniteChain& chain);

struct OracleDiagnostics {
  double V0 = 0.0;
  double envelope_max_err = 0.0;
  double pairing_max_err = 0.0;
  double fo_bound_max_violation = 0.0;  // max(FO - U_hat, 0)
  double hamiltonian_argmin_mismatch = 0.0;
  double enumeration_err = -1.0;        // negative when not applicable
  std::size_t argmin_disagreements = 0;
  std::size_t observation_nodes = 0;
  std::size_t tree_nodes = 0;
};

OracleDiagnostics check_invariants(const FiniteChain& chain, const ExactDpResult& dp,
                                   bool run_enumerator);

/// Monte Carlo cost of a particle-belief controller on the chain: a particle
/// filter over states, actions from the belief-averaged Hamiltonian on the
/// fully observed value. Returns (mean, 95% half-width).
std::pair<double, double> particle_controller_cost(const FiniteChain& chain, std::size_t M_eval,
                                                   std::size_t n_particles, std::uint64_t seed);

void write_policy_tree(std::ostream& out, const ExactDpResult& dp);

}  // namespace posoc
