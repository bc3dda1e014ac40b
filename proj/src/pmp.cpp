#include "posoc/pmp.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "posoc/kernels.hpp"

namespace posoc {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void write_train_log(std::ostream& out, const TrainHistory& h) {
  out << std::setprecision(10);
  for (const auto& r : h.records) {
    out << r.iteration << " " << r.J << " " << r.ci << " " << r.dtheta_norm << " " << r.seconds
        << "\n";
  }
  if (!h.error.empty()) out << "aborted: " << h.error << "\n";
}

namespace {

std::size_t argmin(const double* v, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (v[i] < v[best]) best = i;
  }
  return best;
}

/// f + b . grad + tr(sigma sigma' H) / 2 for one particle and one control.
double generator_objective(const ControlProblem& p, double t, const Vector& x, const Vector& a,
                           const Vector& grad, const Matrix& H) {
  double v = p.running_cost(t, x, a) + p.drift(t, x, a).dot(grad);
  if (H.size() > 0) {
    const Matrix s = p.diffusion(t, x, a);
    v += 0.5 * (s.transpose() * H * s).trace();
  }
  return v;
}

Matrix closed_form_map(const ControlProblem& p) {
  if (!p.control_affine) {
    throw ConfigError("closed-form alpha needs a control-affine problem with quadratic control cost");
  }
  const auto& ca = *p.control_affine;
  // alpha = -R^{-1} B' g  is  g' * map  with map = -(R^{-1} B')'.
  return -ca.R.ldlt().solve(ca.B.transpose()).transpose();
}

}  // namespace

WindowPolicy::WindowPolicy(FeatureBasis zbasis, std::size_t window_K, std::vector<double> times,
                           PolicyMode mode, std::vector<Vector> alpha_grid, BoxSet alpha_set,
                           std::vector<Vector> beta_candidates, std::vector<AlphaRule> alpha_rules,
                           std::vector<BetaRule> beta_rules)
    : zbasis_(std::move(zbasis)),
      window_K_(window_K),
      times_(std::move(times)),
      mode_(mode),
      alpha_grid_(std::move(alpha_grid)),
      alpha_set_(std::move(alpha_set)),
      beta_candidates_(std::move(beta_candidates)),
      alpha_rules_(std::move(alpha_rules)),
      beta_rules_(std::move(beta_rules)) {}

Vector WindowPolicy::apply_alpha(const FeatureBasis& zbasis, const Matrix& W, PolicyMode mode,
                                 const std::vector<Vector>& alpha_grid, const BoxSet& alpha_set,
                                 const double* zflat) {
  Vector phi(static_cast<Eigen::Index>(zbasis.n_features()));
  zbasis.eval(zflat, phi.data());
  if (mode == PolicyMode::closed_form_lqg) return alpha_set.project(W.transpose() * phi);
  const Vector obj = W.transpose() * phi;
  return alpha_grid[argmin(obj.data(), static_cast<std::size_t>(obj.size()))];
}

std::size_t WindowPolicy::apply_beta(const FeatureBasis& zbasis, const Matrix& W,
                                     const double* zflat) {
  Vector phi(static_cast<Eigen::Index>(zbasis.n_features()));
  zbasis.eval(zflat, phi.data());
  const Vector obj = W.transpose() * phi;
  return argmin(obj.data(), static_cast<std::size_t>(obj.size()));
}

Vector WindowPolicy::alpha_at(std::size_t step, double t, const double* zflat) const {
  if (step >= alpha_rules_.size() || std::abs(times_[step] - t) > 1e-9) {
    throw RolloutError("policy was trained on a different time grid (step " +
                       std::to_string(step) + ")");
  }
  return apply_alpha(zbasis_, alpha_rules_[step].W, mode_, alpha_grid_, alpha_set_, zflat);
}

std::size_t WindowPolicy::beta_index(std::size_t n, const double* zflat) const {
  if (beta_candidates_.size() == 1) return 0;
  return apply_beta(zbasis_, beta_rules_.at(n).W, zflat);
}

namespace {

class WindowController : public Controller {
 public:
  explicit WindowController(const WindowPolicy& p)
      : p_(p), buf_(p.zbasis().dim_z() == 0 ? 1 : p.zbasis().dim_z(), 0.0) {}
  Vector alpha(std::size_t step, double t, const WindowState& z) override {
    z.flatten_into(buf_.data());
    return p_.alpha_at(step, t, buf_.data());
  }
  Vector beta(std::size_t n, const WindowState& z) override {
    z.flatten_into(buf_.data());
    return p_.beta_candidate(p_.beta_index(n, buf_.data()));
  }

 private:
  const WindowPolicy& p_;
  std::vector<double> buf_;
};

}  // namespace

std::unique_ptr<Controller> WindowPolicy::start() const {
  return std::make_unique<WindowController>(*this);
}

Vector extract_alpha(const ValueAnsatz& ansatz, const ParticleEnsemble& ensemble,
                     const WindowState& z, std::size_t node, double t,
                     const ControlProblem& problem, PolicyMode mode,
                     const std::vector<Vector>& alpha_grid) {
  if (node >= ansatz.theta.size()) throw ConfigError("ansatz has no node " + std::to_string(node));
  const auto& theta = ansatz.theta[node];
  const auto dx = static_cast<Eigen::Index>(problem.dim_x);
  if (mode == PolicyMode::closed_form_lqg) {
    Vector g = Vector::Zero(dx);
    for (std::size_t m = 0; m < ensemble.size(); ++m) {
      const Vector u = basis_input(ensemble.states[m], z);
      g += ensemble.weights[static_cast<Eigen::Index>(m)] *
           ansatz.basis.gradient_x(theta, u, ansatz.basis.eval(u));
    }
    return problem.alpha_set.project(closed_form_map(problem).transpose() * g);
  }
  if (alpha_grid.empty()) throw ConfigError("grid-search alpha needs a non-empty grid");
  std::vector<double> obj(alpha_grid.size(), 0.0);
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const Vector u = basis_input(ensemble.states[m], z);
    const Vector phi = feature_map(ensemble.states[m], z, ansatz.basis);
    const Vector g = ansatz.basis.gradient_x(theta, u, phi);
    const Matrix H = ansatz.basis.hessian_x(theta, u, phi);
    const double w = ensemble.weights[static_cast<Eigen::Index>(m)];
    for (std::size_t c = 0; c < alpha_grid.size(); ++c) {
      obj[c] += w * generator_objective(problem, t, ensemble.states[m], alpha_grid[c], g, H);
    }
  }
  return alpha_grid[argmin(obj.data(), obj.size())];
}

BetaChoice extract_beta(const ValueAnsatz& ansatz, const ParticleEnsemble& ensemble_pre,
                        const WindowState& z_pre, std::size_t n, std::size_t node,
                        const std::vector<Vector>& candidates, std::size_t n_y_samples,
                        RngStream& rng, const ControlProblem& problem) {
  if (candidates.empty()) throw ConfigError("beta candidate grid is empty");
  BetaChoice out;
  if (candidates.size() == 1) {
    out.objective = {0.0};
    out.beta = candidates.front();
    return out;
  }
  if (n_y_samples == 0) throw ConfigError("extract_beta needs at least one observation sample");
  auto it = ansatz.theta_post.find(n);
  const Vector& theta = it != ansatz.theta_post.end() ? it->second : ansatz.theta.at(node);
  Vector xi(static_cast<Eigen::Index>(problem.dim_y));
  out.objective.assign(candidates.size(), 0.0);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    for (std::size_t m = 0; m < ensemble_pre.size(); ++m) {
      const Vector& x = ensemble_pre.states[m];
      double acc = 0.0;
      for (std::size_t s = 0; s < n_y_samples; ++s) {
        rng.normals(xi);
        const Vector y = problem.observation_sampler(x, candidates[c], n, xi);
        const WindowState z = window_update(z_pre, y);
        acc += problem.impulse_cost(n, x, candidates[c]) + theta.dot(feature_map(x, z, ansatz.basis));
      }
      out.objective[c] += ensemble_pre.weights[static_cast<Eigen::Index>(m)] * acc /
                          static_cast<double>(n_y_samples);
    }
  }
  out.index = argmin(out.objective.data(), out.objective.size());
  out.beta = candidates[out.index];
  return out;
}

namespace {

/// Everything one forward pass leaves behind, one row per trajectory.
struct ForwardPass {
  std::vector<RowMatrix> X;       // per node
  std::vector<RowMatrix> Zpre;    // per node
  std::vector<RowMatrix> Zpost;   // per observation
  std::vector<std::size_t> obs_nodes;
  Matrix stage;                   // M x n_steps
  Matrix impulse;                 // M x N_o
  Vector terminal;
};

PathwiseTargets targets_from(const ForwardPass& fp) {
  const std::size_t N = fp.X.size();
  const Eigen::Index M = fp.terminal.size();
  PathwiseTargets out;
  out.nodes.resize(N);
  out.post.resize(fp.obs_nodes.size());
  std::vector<int> obs_at(N, -1);
  for (std::size_t n = 0; n < fp.obs_nodes.size(); ++n) obs_at[fp.obs_nodes[n]] = static_cast<int>(n);
  Vector P = fp.terminal;
  for (std::size_t k = N; k-- > 0;) {
    if (k + 1 < N) P += fp.stage.col(static_cast<Eigen::Index>(k));
    if (obs_at[k] >= 0) {
      const auto n = static_cast<std::size_t>(obs_at[k]);
      out.post[n] = NodeSamples{Matrix(fp.X[k]), Matrix(fp.Zpost[n]), P};
      P += fp.impulse.col(static_cast<Eigen::Index>(n));
    }
    out.nodes[k] = NodeSamples{Matrix(fp.X[k]), Matrix(fp.Zpre[k]), P};
  }
  (void)M;
  return out;
}

}  // namespace

PathwiseTargets pathwise_costs(const std::vector<Rollout>& rollouts, std::size_t window_K,
                               std::size_t dim_y) {
  if (rollouts.empty()) return {};
  const auto& r0 = rollouts.front();
  const std::size_t N = r0.times.size();
  const auto M = static_cast<Eigen::Index>(rollouts.size());
  const auto dx = r0.states.front().size();
  const auto dz = static_cast<Eigen::Index>(window_K * dim_y);
  ForwardPass fp;
  fp.obs_nodes = r0.obs_nodes;
  fp.X.assign(N, RowMatrix(M, dx));
  fp.Zpre.assign(N, RowMatrix::Zero(M, dz));
  fp.Zpost.assign(fp.obs_nodes.size(), RowMatrix::Zero(M, dz));
  fp.stage.resize(M, static_cast<Eigen::Index>(N - 1));
  fp.impulse.resize(M, static_cast<Eigen::Index>(fp.obs_nodes.size()));
  fp.terminal.resize(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto& r = rollouts[static_cast<std::size_t>(m)];
    if (r.times != r0.times || r.obs_nodes != r0.obs_nodes) {
      throw FitError("pathwise_costs: rollouts do not share a time grid");
    }
    WindowState z(window_K, dim_y);
    std::size_t n = 0;
    for (std::size_t k = 0; k < N; ++k) {
      fp.X[k].row(m) = r.states[k].transpose();
      z.flatten_into(fp.Zpre[k].row(m).data());
      if (n < r.obs_nodes.size() && r.obs_nodes[n] == k) {
        z = window_update(z, r.observations[n]);
        z.flatten_into(fp.Zpost[n].row(m).data());
        fp.impulse(m, static_cast<Eigen::Index>(n)) = r.impulse_costs[n];
        ++n;
      }
      if (k + 1 < N) fp.stage(m, static_cast<Eigen::Index>(k)) = r.stage_costs[k];
    }
    fp.terminal[m] = r.terminal_cost_value;
  }
  return targets_from(fp);
}

namespace {

double theta_distance(const ValueAnsatz& a, const ValueAnsatz& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.theta.size(); ++k) s += (a.theta[k] - b.theta[k]).squaredNorm();
  for (const auto& [n, t] : a.theta_post) {
    auto it = b.theta_post.find(n);
    s += it == b.theta_post.end() ? t.squaredNorm() : (t - it->second).squaredNorm();
  }
  return std::sqrt(s);
}

class Trainer {
 public:
  Trainer(const ControlProblem& p, const TrainConfig& c)
      : p_(p),
        c_(c),
        grid_(p.horizon, p.obs_times, c.dt),
        M_(c.M_train),
        dx_(static_cast<Eigen::Index>(p.dim_x)),
        dy_(static_cast<Eigen::Index>(p.dim_y)),
        dz_(static_cast<Eigen::Index>(c.window_K * p.dim_y)),
        basis_(c.degree, p.dim_x, c.window_K * p.dim_y, c.include_cross, c.basis),
        zbasis_(c.policy_degree, 0, c.window_K * p.dim_y) {
    if (M_ < 2) throw ConfigError("training needs M_train >= 2");
    if (c.window_K == 0) throw ConfigError("window length K must be at least 1");
    if (c.mode == PolicyMode::grid_search && c.alpha_grid.empty()) {
      throw ConfigError("grid-search alpha needs a non-empty alpha grid");
    }
    if (c.mode == PolicyMode::closed_form_lqg) alpha_map_ = closed_form_map(p);
    for (const auto& a : c.alpha_grid) {
      if (a.size() != static_cast<Eigen::Index>(p.dim_alpha)) {
        throw ConfigError("alpha grid points must have dim_alpha entries");
      }
    }
    lambda_ = c.ridge * static_cast<double>(M_);
  }

  std::shared_ptr<const WindowPolicy> derive(const ValueAnsatz& theta) const {
    if (!(theta.basis == basis_) || theta.window_K != c_.window_K ||
        theta.theta.size() != grid_.n_nodes() || theta.theta_post.size() != grid_.n_obs()) {
      throw ConfigError("ansatz does not match the problem and training configuration");
    }
    ForwardPass fp;
    return forward(theta, c_.seed, fp);
  }

  TrainResult run() {
    ValueAnsatz theta = initial_ansatz();
    TrainResult result;
    TrainHistory& hist = result.history;
    double J_prev = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t it = 1; it <= c_.n_outer; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      std::shared_ptr<const WindowPolicy> policy;
      ValueAnsatz next;
      double J = 0.0, ci = 0.0;
      try {
        const std::uint64_t seed = c_.resample_noise ? derive_stream(c_.seed, it) : c_.seed;
        ForwardPass fp;
        policy = forward(theta, seed, fp);
        std::vector<double> totals(M_);
        const PathwiseTargets tg = targets_from(fp);
        for (std::size_t m = 0; m < M_; ++m) totals[m] = tg.nodes[0].P[static_cast<Eigen::Index>(m)];
        J = sample_mean(totals);
        ci = ci95(totals);
        next = refit(tg);
      } catch (const Error& e) {
        hist.error = e.what();
        throw TrainError(std::string("training aborted at iteration ") + std::to_string(it) +
                             ": " + e.what(),
                         hist);
      }
      const double dtheta = theta_distance(next, theta);
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      hist.records.push_back({it, J, ci, dtheta, secs});
      result.ansatz = theta;
      result.policy = policy;
      const bool fixed_point = dtheta == 0.0;
      const bool flat = it > 1 && std::abs(J - J_prev) / std::max(1.0, std::abs(J_prev)) < c_.tol;
      if (fixed_point || flat) {
        hist.converged = true;
        break;
      }
      J_prev = J;
      theta = std::move(next);
    }
    return result;
  }

 private:
  ValueAnsatz initial_ansatz() const {
    ValueAnsatz a;
    a.basis = basis_;
    a.window_K = c_.window_K;
    a.dim_y = p_.dim_y;
    a.time_nodes = grid_.times();
    const auto F = static_cast<Eigen::Index>(basis_.n_features());
    a.theta.assign(grid_.n_nodes(), Vector::Zero(F));
    for (std::size_t n = 0; n < grid_.n_obs(); ++n) a.theta_post[n] = Vector::Zero(F);
    if (c_.init_seed) {
      for (std::size_t k = 0; k < a.theta.size(); ++k) {
        RngStream r(*c_.init_seed, k, 3);
        for (Eigen::Index i = 0; i < F; ++i) a.theta[k][i] = c_.init_scale * r.normal();
      }
      for (auto& [n, t] : a.theta_post) {
        RngStream r(*c_.init_seed, a.theta.size() + n, 3);
        for (Eigen::Index i = 0; i < F; ++i) t[i] = c_.init_scale * r.normal();
      }
      return a;
    }
    // Terminal anchor: regress g on the initial cloud.
    Matrix X(static_cast<Eigen::Index>(M_), dx_);
    Vector P(static_cast<Eigen::Index>(M_));
    for (std::size_t m = 0; m < M_; ++m) {
      RngStream r(c_.seed, m, 0);
      const Vector x = p_.initial_law.sample(r);
      X.row(static_cast<Eigen::Index>(m)) = x.transpose();
      P[static_cast<Eigen::Index>(m)] = p_.terminal_cost(x);
    }
    const Matrix Z = Matrix::Zero(static_cast<Eigen::Index>(M_), dz_);
    a.theta.back() = standardized_fit(design_matrix(basis_, X, Z), P, lambda_, c_.exec).col(0);
    return a;
  }

  ValueAnsatz refit(const PathwiseTargets& tg) const {
    ValueAnsatz a = fit_value_ansatz(tg.nodes, basis_, lambda_, grid_.times(), c_.window_K,
                                     p_.dim_y, c_.exec);
    for (std::size_t n = 0; n < tg.post.size(); ++n) {
      a.theta_post[n] = standardized_fit(design_matrix(basis_, tg.post[n].X, tg.post[n].Z),
                                         tg.post[n].P, lambda_, c_.exec)
                            .col(0);
    }
    return a;
  }

  Matrix z_design(const RowMatrix& Z) const {
    const auto F = static_cast<Eigen::Index>(zbasis_.n_features());
    Matrix Phi(Z.rows(), F);
    Vector phi(F);
    for (Eigen::Index m = 0; m < Z.rows(); ++m) {
      zbasis_.eval(Z.row(m).data(), phi.data());
      Phi.row(m) = phi.transpose();
    }
    return Phi;
  }

  std::shared_ptr<const WindowPolicy> forward(const ValueAnsatz& theta, std::uint64_t seed,
                                              ForwardPass& fp) const {
    const auto M = static_cast<Eigen::Index>(M_);
    const std::size_t N = grid_.n_nodes();
    const bool par = c_.exec == Execution::parallel;
    const auto& cands = p_.beta_set;

    std::vector<RngStream> state_rng, obs_rng, pre_rng;
    std::vector<Vector> x(M_);
    state_rng.reserve(M_);
    obs_rng.reserve(M_);
    pre_rng.reserve(M_);
    for (std::size_t m = 0; m < M_; ++m) {
      state_rng.emplace_back(seed, m, 0);
      obs_rng.emplace_back(seed, m, 1);
      pre_rng.emplace_back(seed, m, 2);
      x[m] = p_.initial_law.sample(state_rng[m]);
    }
    RowMatrix Z = RowMatrix::Zero(M, dz_);

    fp.obs_nodes.clear();
    for (std::size_t n = 0; n < grid_.n_obs(); ++n) fp.obs_nodes.push_back(grid_.obs_node(n));
    fp.X.assign(N, RowMatrix());
    fp.Zpre.assign(N, RowMatrix());
    fp.Zpost.assign(grid_.n_obs(), RowMatrix());
    fp.stage.resize(M, static_cast<Eigen::Index>(N - 1));
    fp.impulse.resize(M, static_cast<Eigen::Index>(grid_.n_obs()));
    fp.terminal.resize(M);

    std::vector<WindowPolicy::AlphaRule> arules;
    std::vector<WindowPolicy::BetaRule> brules(grid_.n_obs());
    std::vector<double> times(grid_.times().begin(), grid_.times().end() - 1);
    const auto F = static_cast<Eigen::Index>(basis_.n_features());
    const auto n_alpha = static_cast<Eigen::Index>(c_.alpha_grid.size());

    for (std::size_t k = 0; k < N; ++k) {
      fp.X[k].resize(M, dx_);
      for (Eigen::Index m = 0; m < M; ++m) fp.X[k].row(m) = x[static_cast<std::size_t>(m)].transpose();
      fp.Zpre[k] = Z;

      const int obs = grid_.obs_at(k);
      if (obs >= 0) {
        const auto n = static_cast<std::size_t>(obs);
        std::vector<std::size_t> choice(M_, 0);
        if (cands.size() > 1) {
          const Vector& th = theta.theta_post.at(n);
          const auto nc = static_cast<Eigen::Index>(cands.size());
          Matrix obj(M, nc);
#pragma omp parallel for schedule(static) if (par)
          for (Eigen::Index m = 0; m < M; ++m) {
            const auto mu = static_cast<std::size_t>(m);
            Vector u(dx_ + dz_), phi(F), xi(dy_);
            u.head(dx_) = x[mu];
            for (Eigen::Index c = 0; c < nc; ++c) {
              const Vector& b = cands[static_cast<std::size_t>(c)];
              const double cost = p_.impulse_cost(n, x[mu], b);
              double acc = 0.0;
              for (std::size_t s = 0; s < c_.n_y_samples; ++s) {
                pre_rng[mu].normals(xi);
                const Vector y = p_.observation_sampler(x[mu], b, n, xi);
                if (dz_ > dy_) u.segment(dx_, dz_ - dy_) = Z.row(m).tail(dz_ - dy_).transpose();
                u.tail(dy_) = y;
                basis_.eval(u.data(), phi.data());
                acc += cost + th.dot(phi);
              }
              obj(m, c) = acc / static_cast<double>(c_.n_y_samples);
            }
          }
          brules[n].W = standardized_fit(z_design(Z), obj, lambda_, c_.exec);
          for (Eigen::Index m = 0; m < M; ++m) {
            choice[static_cast<std::size_t>(m)] =
                WindowPolicy::apply_beta(zbasis_, brules[n].W, Z.row(m).data());
          }
        }
        Vector xi(dy_);
        for (Eigen::Index m = 0; m < M; ++m) {
          const auto mu = static_cast<std::size_t>(m);
          const Vector& b = cands[choice[mu]];
          obs_rng[mu].normals(xi);
          const Vector y = p_.observation_sampler(x[mu], b, n, xi);
          fp.impulse(m, static_cast<Eigen::Index>(n)) = p_.impulse_cost(n, x[mu], b);
          if (dz_ > dy_) Z.row(m).head(dz_ - dy_) = Z.row(m).tail(dz_ - dy_).eval();
          Z.row(m).tail(dy_) = y.transpose();
        }
        fp.Zpost[n] = Z;
      }
      if (k + 1 == N) break;

      const double t = grid_.time(k), h = grid_.step(k);
      const Matrix Phi_z = z_design(Z);
      const auto& th = theta.theta[k + 1];
      WindowPolicy::AlphaRule rule;
      if (c_.mode == PolicyMode::closed_form_lqg) {
        Matrix G(M, dx_);
#pragma omp parallel for schedule(static) if (par)
        for (Eigen::Index m = 0; m < M; ++m) {
          Vector u(dx_ + dz_), phi(F), g(dx_);
          u.head(dx_) = x[static_cast<std::size_t>(m)];
          if (dz_ > 0) u.tail(dz_) = Z.row(m).transpose();
          basis_.eval(u.data(), phi.data());
          basis_.gradient_x(th, u.data(), phi.data(), g.data());
          G.row(m) = g.transpose();
        }
        rule.W = standardized_fit(Phi_z, G, lambda_, c_.exec) * alpha_map_;
      } else {
        Matrix obj(M, n_alpha);
#pragma omp parallel for schedule(static) if (par)
        for (Eigen::Index m = 0; m < M; ++m) {
          const auto mu = static_cast<std::size_t>(m);
          Vector u(dx_ + dz_), phi(F);
          u.head(dx_) = x[mu];
          if (dz_ > 0) u.tail(dz_) = Z.row(m).transpose();
          basis_.eval(u.data(), phi.data());
          const Vector g = basis_.gradient_x(th, u, phi);
          const Matrix H = basis_.hessian_x(th, u, phi);
          for (Eigen::Index c = 0; c < n_alpha; ++c) {
            obj(m, c) = generator_objective(p_, t, x[mu], c_.alpha_grid[static_cast<std::size_t>(c)], g, H);
          }
        }
        rule.W = standardized_fit(Phi_z, obj, lambda_, c_.exec);
      }
      std::vector<Vector> a(M_);
      for (Eigen::Index m = 0; m < M; ++m) {
        const auto mu = static_cast<std::size_t>(m);
        a[mu] = WindowPolicy::apply_alpha(zbasis_, rule.W, c_.mode, c_.alpha_grid, p_.alpha_set,
                                          Z.row(m).data());
        fp.stage(m, static_cast<Eigen::Index>(k)) = p_.running_cost(t, x[mu], a[mu]) * h;
      }
      arules.push_back(std::move(rule));
      em_sweep(
          x, state_rng, [&](std::size_t m, const Vector&) { return a[m]; }, t, h, p_, c_.exec);
    }
    for (Eigen::Index m = 0; m < M; ++m) fp.terminal[m] = p_.terminal_cost(x[static_cast<std::size_t>(m)]);
    return std::make_shared<const WindowPolicy>(zbasis_, c_.window_K, std::move(times), c_.mode,
                                                c_.alpha_grid, p_.alpha_set, cands,
                                                std::move(arules), std::move(brules));
  }

  const ControlProblem& p_;
  const TrainConfig& c_;
  TimeGrid grid_;
  std::size_t M_;
  Eigen::Index dx_, dy_, dz_;
  FeatureBasis basis_, zbasis_;
  Matrix alpha_map_;
  double lambda_ = 0.0;
};

}  // namespace

TrainResult train(const ControlProblem& problem, const TrainConfig& config) {
  return Trainer(problem, config).run();
}

std::shared_ptr<const WindowPolicy> policy_from_ansatz(const ControlProblem& problem,
                                                       const TrainConfig& config,
                                                       const ValueAnsatz& ansatz) {
  return Trainer(problem, config).derive(ansatz);
}

}  // namespace posoc
