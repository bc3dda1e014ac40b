#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "posoc/model.hpp"

namespace posoc {

/// Weighted particle approximation of the belief. Every particle owns its
/// random stream, so propagation does not depend on scheduling.
struct ParticleEnsemble {
  std::vector<Vector> states;
  Vector weights;
  std::vector<RngStream> rngs;
  std::uint64_t seed = 0;
  std::uint64_t generation = 0;

  std::size_t size() const { return states.size(); }
  std::vector<std::uint64_t> stream_ids() const;
  Vector mean() const;
  Matrix cov() const;
  /// Sum_m w_m phi(x_m).
  double pairing(const std::function<double(const Vector&)>& phi) const;
  void normalize();
};

/// M equally weighted draws from the initial law; particle m on stream m.
ParticleEnsemble make_ensemble(const ControlProblem& problem, std::size_t M, std::uint64_t seed);

using AlphaOf = std::function<Vector(double t, const Vector& x, const WindowState& z)>;

ParticleEnsemble propagate_ensemble(const ParticleEnsemble& e, const AlphaOf& alpha_of,
                                    const WindowState& window, double t0, double t1, double dt,
                                    const ControlProblem& problem,
                                    Execution exec = Execution::parallel);

struct Reweighted {
  ParticleEnsemble ensemble;
  double log_L = 0.0;
};

Reweighted bayes_reweight(const ParticleEnsemble& e, const Vector& y, const Vector& beta,
                          std::size_t obs_index, const ControlProblem& problem);

double effective_sample_size(const Vector& weights);

/// Low-variance resampling with one uniform offset drawn from rng. Children
/// receive fresh streams derived from their parent and the generation.
ParticleEnsemble systematic_resample(const ParticleEnsemble& e, RngStream& rng);
/// Copy counts of systematic resampling for offset u in [0, 1/M).
std::vector<std::size_t> systematic_counts(const Vector& weights, double u);
/// Resamples when ESS < threshold * M.
ParticleEnsemble resample_if_needed(const ParticleEnsemble& e, RngStream& rng,
                                    double threshold = 0.5);

void write_ensemble_csv(std::ostream& out, const ParticleEnsemble& e);

struct GaussianBelief {
  Vector mean;
  Matrix cov;
};

GaussianBelief kalman_predict(const GaussianBelief& b, double t0, double t1, const Matrix& A,
                              const Matrix& B, const Matrix& Sigma,
                              const std::function<Vector(double)>& alpha_path, double dt);
GaussianBelief kalman_update(const GaussianBelief& b, const Vector& y, const Matrix& C,
                             const Matrix& R_y);
/// log N(y; C mean, C cov C' + R_y), the innovation likelihood.
double kalman_log_likelihood(const GaussianBelief& prior, const Vector& y, const Matrix& C,
                             const Matrix& R_y);

}  // namespace posoc
