#include "posoc/filtering.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>

#include "posoc/kernels.hpp"

namespace posoc {

std::vector<std::uint64_t> ParticleEnsemble::stream_ids() const {
  std::vector<std::uint64_t> ids;
  ids.reserve(rngs.size());
  for (const auto& r : rngs) ids.push_back(r.stream_id());
  return ids;
}

Vector ParticleEnsemble::mean() const {
  Vector m = Vector::Zero(states.front().size());
  for (std::size_t i = 0; i < states.size(); ++i) m += weights[static_cast<Eigen::Index>(i)] * states[i];
  return m;
}

Matrix ParticleEnsemble::cov() const {
  const Vector m = mean();
  Matrix c = Matrix::Zero(m.size(), m.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    const Vector d = states[i] - m;
    c.noalias() += weights[static_cast<Eigen::Index>(i)] * d * d.transpose();
  }
  return c;
}

double ParticleEnsemble::pairing(const std::function<double(const Vector&)>& phi) const {
  double s = 0.0;
  for (std::size_t i = 0; i < states.size(); ++i) s += weights[static_cast<Eigen::Index>(i)] * phi(states[i]);
  return s;
}

void ParticleEnsemble::normalize() {
  const double s = weights.sum();
  if (!(s > 0.0)) throw DegeneracyError("ensemble weights sum to zero");
  weights /= s;
}

ParticleEnsemble make_ensemble(const ControlProblem& problem, std::size_t M, std::uint64_t seed) {
  if (M == 0) throw ConfigError("ensemble needs at least one particle");
  ParticleEnsemble e;
  e.seed = seed;
  e.states.reserve(M);
  e.rngs.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    e.rngs.emplace_back(seed, m, 0);
    e.states.push_back(problem.initial_law.sample(e.rngs.back()));
  }
  e.weights = Vector::Constant(static_cast<Eigen::Index>(M), 1.0 / static_cast<double>(M));
  return e;
}

ParticleEnsemble propagate_ensemble(const ParticleEnsemble& e, const AlphaOf& alpha_of,
                                    const WindowState& window, double t0, double t1, double dt,
                                    const ControlProblem& problem, Execution exec) {
  if (!(t1 > t0)) throw DomainError("propagate_ensemble needs t0 < t1");
  if (!(dt > 0.0)) throw DomainError("propagate_ensemble needs dt > 0");
  const auto steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9)));
  const double h = (t1 - t0) / static_cast<double>(steps);
  ParticleEnsemble out = e;
  for (std::size_t j = 0; j < steps; ++j) {
    const double t = t0 + static_cast<double>(j) * h;
    em_sweep(
        out.states, out.rngs,
        [&](std::size_t, const Vector& x) { return alpha_of(t, x, window); }, t, h, problem,
        exec);
  }
  return out;
}

Reweighted bayes_reweight(const ParticleEnsemble& e, const Vector& y, const Vector& beta,
                          std::size_t obs_index, const ControlProblem& problem) {
  const auto M = static_cast<Eigen::Index>(e.size());
  Vector loglik(M);
  double max_ll = -std::numeric_limits<double>::infinity();
  double max_lw = -std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < M; ++m) {
    loglik[m] = problem.likelihood_logdensity(y, e.states[static_cast<std::size_t>(m)], beta,
                                              obs_index);
    if (e.weights[m] > 0.0) {
      max_ll = std::max(max_ll, loglik[m]);
      max_lw = std::max(max_lw, loglik[m] + std::log(e.weights[m]));
    }
  }
  // exp(max_ll) == 0 means every likelihood underflows in linear scale.
  if (!std::isfinite(max_lw) || std::exp(max_ll) == 0.0) {
    throw DegeneracyError("all particle likelihoods vanish at observation " +
                          std::to_string(obs_index));
  }
  Reweighted out{e, 0.0};
  double s = 0.0;
  for (Eigen::Index m = 0; m < M; ++m) {
    const double w = e.weights[m] > 0.0 ? std::exp(loglik[m] + std::log(e.weights[m]) - max_lw) : 0.0;
    out.ensemble.weights[m] = w;
    s += w;
  }
  out.ensemble.weights /= s;
  out.log_L = max_lw + std::log(s);
  return out;
}

double effective_sample_size(const Vector& weights) { return 1.0 / weights.squaredNorm(); }

std::vector<std::size_t> systematic_counts(const Vector& weights, double u) {
  const auto M = static_cast<std::size_t>(weights.size());
  std::vector<std::size_t> counts(M, 0);
  const double step = 1.0 / static_cast<double>(M);
  double cum = weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < M; ++i) {
    const double pos = u + static_cast<double>(i) * step;
    while (pos >= cum && j + 1 < M) cum += weights[static_cast<Eigen::Index>(++j)];
    ++counts[j];
  }
  return counts;
}

ParticleEnsemble systematic_resample(const ParticleEnsemble& e, RngStream& rng) {
  const std::size_t M = e.size();
  const auto counts = systematic_counts(e.weights, rng.uniform() / static_cast<double>(M));
  ParticleEnsemble out;
  out.seed = e.seed;
  out.generation = e.generation + 1;
  out.states.reserve(M);
  out.rngs.reserve(M);
  for (std::size_t j = 0; j < M; ++j) {
    for (std::size_t c = 0; c < counts[j]; ++c) {
      out.states.push_back(e.states[j]);
      const auto child = out.states.size() - 1;
      out.rngs.emplace_back(e.seed, derive_stream(e.rngs[j].stream_id(), child, out.generation), 0);
    }
  }
  out.weights = Vector::Constant(static_cast<Eigen::Index>(M), 1.0 / static_cast<double>(M));
  return out;
}

ParticleEnsemble resample_if_needed(const ParticleEnsemble& e, RngStream& rng, double threshold) {
  if (effective_sample_size(e.weights) < threshold * static_cast<double>(e.size())) {
    return systematic_resample(e, rng);
  }
  return e;
}

void write_ensemble_csv(std::ostream& out, const ParticleEnsemble& e) {
  out << std::setprecision(17) << "particle_id";
  for (Eigen::Index i = 0; i < e.states.front().size(); ++i) out << ",x_" << i + 1;
  out << ",weight\n";
  for (std::size_t m = 0; m < e.size(); ++m) {
    out << m;
    for (Eigen::Index i = 0; i < e.states[m].size(); ++i) out << "," << e.states[m][i];
    out << "," << e.weights[static_cast<Eigen::Index>(m)] << "\n";
  }
}

GaussianBelief kalman_predict(const GaussianBelief& b, double t0, double t1, const Matrix& A,
                              const Matrix& B, const Matrix& Sigma,
                              const std::function<Vector(double)>& alpha_path, double dt) {
  if (!(t1 > t0)) throw DomainError("kalman_predict needs t0 < t1");
  const auto steps =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9)));
  const double h = (t1 - t0) / static_cast<double>(steps);
  auto fm = [&](double t, const Vector& m) -> Vector { return A * m + B * alpha_path(t); };
  auto fP = [&](const Matrix& P) -> Matrix { return A * P + P * A.transpose() + Sigma; };
  GaussianBelief out = b;
  for (std::size_t j = 0; j < steps; ++j) {
    const double t = t0 + static_cast<double>(j) * h;
    const Vector k1 = fm(t, out.mean);
    const Vector k2 = fm(t + 0.5 * h, out.mean + 0.5 * h * k1);
    const Vector k3 = fm(t + 0.5 * h, out.mean + 0.5 * h * k2);
    const Vector k4 = fm(t + h, out.mean + h * k3);
    out.mean += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const Matrix P1 = fP(out.cov);
    const Matrix P2 = fP(out.cov + 0.5 * h * P1);
    const Matrix P3 = fP(out.cov + 0.5 * h * P2);
    const Matrix P4 = fP(out.cov + h * P3);
    out.cov += h / 6.0 * (P1 + 2.0 * P2 + 2.0 * P3 + P4);
    out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  }
  return out;
}

namespace {

Eigen::LDLT<Matrix> innovation(const GaussianBelief& b, const Matrix& C, const Matrix& R_y) {
  const Matrix S = C * b.cov * C.transpose() + R_y;
  Eigen::LDLT<Matrix> ldlt(S);
  const Vector d = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || d.minCoeff() <= 1e-14 * std::max(1.0, d.maxCoeff())) {
    throw LinearAlgebraError("innovation covariance is singular");
  }
  return ldlt;
}

}  // namespace

GaussianBelief kalman_update(const GaussianBelief& b, const Vector& y, const Matrix& C,
                             const Matrix& R_y) {
  const auto ldlt = innovation(b, C, R_y);
  const Matrix K = ldlt.solve(C * b.cov).transpose();
  GaussianBelief out;
  out.mean = b.mean + K * (y - C * b.mean);
  const Matrix I = Matrix::Identity(b.cov.rows(), b.cov.cols());
  out.cov = (I - K * C) * b.cov;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

double kalman_log_likelihood(const GaussianBelief& prior, const Vector& y, const Matrix& C,
                             const Matrix& R_y) {
  const auto ldlt = innovation(prior, C, R_y);
  const Vector r = y - C * prior.mean;
  const double quad = r.dot(ldlt.solve(r));
  const double logdet = ldlt.vectorD().array().log().sum();
  return -0.5 * quad - 0.5 * logdet -
         0.5 * static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace posoc
