#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "posoc/filtering.hpp"
#include "posoc/regression.hpp"
#include "posoc/sde.hpp"

namespace posoc {

struct TrainConfig {
  std::size_t M_train = 500;
  double dt = 0.01;
  std::size_t window_K = 1;
  /// Value ansatz basis over (x, z).
  std::size_t degree = 2;
  bool include_cross = true;
  BasisKind basis = BasisKind::monomial;
  /// Policy basis over z alone.
  std::size_t policy_degree = 2;
  /// Penalty per sample: lambda = ridge * M in standardised coordinates.
  double ridge = 1e-6;
  std::size_t n_outer = 30;
  double tol = 1e-3;
  std::uint64_t seed = 0;
  PolicyMode mode = PolicyMode::closed_form_lqg;
  std::vector<Vector> alpha_grid;
  std::size_t n_y_samples = 8;
  /// Fresh noise every outer iteration instead of common random numbers.
  bool resample_noise = false;
  /// Random initial coefficients (scale init_scale) instead of the terminal anchor.
  std::optional<std::uint64_t> init_seed;
  double init_scale = 0.1;
  Execution exec = Execution::parallel;
};

struct TrainRecord {
  std::size_t iteration = 0;
  double J = 0.0;
  double ci = 0.0;
  double dtheta_norm = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<TrainRecord> records;
  /// Set when the iteration was aborted by an error.
  std::string error;
  bool converged = false;

  std::size_t size() const { return records.size(); }
};

void write_train_log(std::ostream& out, const TrainHistory& h);

/// Policy read off a coefficient table indexed by grid node. alpha(z) and
/// beta(z) are functions of the window only.
class WindowPolicy : public PolicyPair {
 public:
  struct AlphaRule {
    /// closed form: alpha = W' phi(z), W is F x d_alpha.
    /// grid search: objective_c = W' phi(z), argmin over alpha_grid.
    Matrix W;
  };
  struct BetaRule {
    /// Columns: fitted objective per candidate. Empty for a single candidate.
    Matrix W;
  };

  WindowPolicy(FeatureBasis zbasis, std::size_t window_K, std::vector<double> times,
               PolicyMode mode, std::vector<Vector> alpha_grid, BoxSet alpha_set,
               std::vector<Vector> beta_candidates, std::vector<AlphaRule> alpha_rules,
               std::vector<BetaRule> beta_rules);

  std::unique_ptr<Controller> start() const override;
  std::size_t window_length() const override { return window_K_; }
  PolicyMode mode() const override { return mode_; }
  std::string name() const override { return "particle"; }

  Vector alpha_at(std::size_t step, double t, const double* zflat) const;
  static Vector apply_alpha(const FeatureBasis& zbasis, const Matrix& W, PolicyMode mode,
                            const std::vector<Vector>& alpha_grid, const BoxSet& alpha_set,
                            const double* zflat);
  static std::size_t apply_beta(const FeatureBasis& zbasis, const Matrix& W, const double* zflat);
  std::size_t beta_index(std::size_t n, const double* zflat) const;
  const Vector& beta_candidate(std::size_t i) const { return beta_candidates_[i]; }
  const FeatureBasis& zbasis() const { return zbasis_; }

 private:
  FeatureBasis zbasis_;
  std::size_t window_K_;
  std::vector<double> times_;
  PolicyMode mode_;
  std::vector<Vector> alpha_grid_;
  BoxSet alpha_set_;
  std::vector<Vector> beta_candidates_;
  std::vector<AlphaRule> alpha_rules_;
  std::vector<BetaRule> beta_rules_;
};

/// Belief-averaged Hamiltonian minimiser at node `node` of the ansatz.
Vector extract_alpha(const ValueAnsatz& ansatz, const ParticleEnsemble& ensemble,
                     const WindowState& z, std::size_t node, double t,
                     const ControlProblem& problem, PolicyMode mode,
                     const std::vector<Vector>& alpha_grid = {});

struct BetaChoice {
  std::vector<double> objective;  // one entry per candidate
  std::size_t index = 0;
  Vector beta;
};

/// Pre-posterior choice of the observation control at observation n. Uses
/// theta_post[n] when present, otherwise theta at `node`.
BetaChoice extract_beta(const ValueAnsatz& ansatz, const ParticleEnsemble& ensemble_pre,
                        const WindowState& z_pre, std::size_t n, std::size_t node,
                        const std::vector<Vector>& candidates, std::size_t n_y_samples,
                        RngStream& rng, const ControlProblem& problem);

struct PathwiseTargets {
  /// Pre-observation samples per node.
  std::vector<NodeSamples> nodes;
  /// Post-observation samples per observation index (target excludes c_n).
  std::vector<NodeSamples> post;
};

PathwiseTargets pathwise_costs(const std::vector<Rollout>& rollouts, std::size_t window_K,
                               std::size_t dim_y);

struct TrainResult {
  ValueAnsatz ansatz;
  std::shared_ptr<const WindowPolicy> policy;
  TrainHistory history;
};

/// Particle fixed-point iteration. On a degeneracy or propagation error the
/// partial history is kept in the thrown TrainError.
TrainResult train(const ControlProblem& problem, const TrainConfig& config);

/// One forward pass with fixed coefficients (the pass train() ran last).
std::shared_ptr<const WindowPolicy> policy_from_ansatz(const ControlProblem& problem,
                                                       const TrainConfig& config,
                                                       const ValueAnsatz& ansatz);

class TrainError : public Error {
 public:
  TrainError(const std::string& what, TrainHistory h) : Error(what), history_(std::move(h)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

}  // namespace posoc
