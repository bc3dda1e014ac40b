#include "posoc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace posoc {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.rows() != rows || m.cols() != cols) {
    std::ostringstream os;
    os << name << " has shape " << shape(m) << ", expected " << rows << "x" << cols;
    throw ConfigError(os.str());
  }
}

double min_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

void require_symmetric_psd(const Matrix& m, const char* name, bool definite) {
  require(m.rows() == m.cols(), std::string(name) + " must be square");
  require((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10,
          std::string(name) + " must be symmetric");
  const double lo = min_eigenvalue(m);
  if (definite) {
    require(lo > 1e-10, std::string(name) + " must be positive definite");
  } else {
    require(lo >= -1e-10, std::string(name) + " must be positive semi-definite");
  }
}

/// Square root factor L with L L' = cov, valid for singular PSD matrices.
Matrix psd_sqrt(const Matrix& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * d.asDiagonal();
}

InitialLaw gaussian_law(const Vector& mean, const Matrix& cov) {
  InitialLaw law;
  law.mean = mean;
  law.cov = cov;
  const Matrix root = psd_sqrt(cov);
  law.sample = [mean, root](RngStream& rng) {
    Vector xi(mean.size());
    rng.normals(xi);
    return Vector(mean + root * xi);
  };
  return law;
}

double log_gaussian_diag(const Vector& resid, const Vector& scale) {
  // scale has size 1 (broadcast) or resid.size().
  const bool broadcast = scale.size() == 1;
  double quad = 0.0;
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < resid.size(); ++i) {
    const double s = broadcast ? scale[0] : scale[i];
    const double u = resid[i] / s;
    quad += u * u;
    logdet += std::log(s);
  }
  return -0.5 * quad - logdet -
         0.5 * static_cast<double>(resid.size()) * std::log(2.0 * std::numbers::pi);
}

}  // namespace

Vector BoxSet::project(const Vector& v) const {
  if (!bounded()) return v;
  return v.cwiseMax(lower).cwiseMin(upper);
}

bool BoxSet::contains(const Vector& v, double tol) const {
  if (!bounded()) return true;
  return ((v - lower).array() >= -tol).all() && ((upper - v).array() >= -tol).all();
}

void ObstacleSpec::validate(double horizon) const {
  require(0.0 <= t_min && t_min < t_max && t_max <= horizon,
          "obstacle time window must satisfy 0 <= t_min < t_max <= T");
  require(0.0 <= r_in && r_in < r_out, "obstacle radii must satisfy 0 <= r_in < r_out");
  require(magnitude >= 0.0, "obstacle magnitude must be nonnegative");
  const Eigen::Index n = x_star.size();
  require(n > 0, "obstacle target x_star must be set");
  require_shape(Q, n, n, "Q");
  require_shape(Q_T, n, n, "Q_T");
  require_shape(R, n, n, "R");
  require_shape(sigma, n, sigma.cols(), "sigma");
  require(C.cols() == n && C.rows() > 0, "C must have dim_x columns");
  require(eps > 0.0, "observation noise eps must be positive");
  require(m0.size() == n, "m0 must have dim_x entries");
  require_shape(Sigma0, n, n, "Sigma0");
  require_symmetric_psd(Q, "Q", false);
  require_symmetric_psd(Q_T, "Q_T", false);
  require_symmetric_psd(R, "R", true);
  require_symmetric_psd(Sigma0, "Sigma0", false);
}

std::size_t LqgSpec::dim_beta() const {
  if (fixed_eps) return 1;
  return beta_grid.empty() ? 0 : static_cast<std::size_t>(beta_grid.front().size());
}

Vector LqgSpec::kappa_at(std::size_t obs_index) const {
  if (kappa.empty()) return Vector::Zero(static_cast<Eigen::Index>(dim_beta()));
  if (kappa.size() == 1) return kappa.front();
  return kappa.at(obs_index);
}

void LqgSpec::validate() const {
  const Eigen::Index n = A.rows();
  require(n > 0, "A must be non-empty");
  require_shape(A, n, n, "A");
  require(B.rows() == n && B.cols() > 0, "B has shape " + shape(B) + ", expected dim_x rows");
  require(C.cols() == n && C.rows() > 0, "C has shape " + shape(C) + ", expected dim_x columns");
  require(sigma.rows() == n && sigma.cols() > 0,
          "sigma has shape " + shape(sigma) + ", expected dim_x rows");
  require_shape(Q, n, n, "Q");
  require_shape(Q_T, n, n, "Q_T");
  require_shape(R, B.cols(), B.cols(), "R");
  require(m0.size() == n, "m0 must have dim_x entries");
  require_shape(Sigma0, n, n, "Sigma0");
  require_symmetric_psd(Q, "Q", false);
  require_symmetric_psd(Q_T, "Q_T", false);
  require_symmetric_psd(R, "R", true);
  require_symmetric_psd(Sigma0, "Sigma0", false);

  require(fixed_eps.has_value() != !beta_grid.empty() || fixed_eps.has_value(),
          "either fixed_eps or a beta grid is required");
  if (fixed_eps) {
    require(*fixed_eps > 0.0, "fixed_eps must be positive");
  } else {
    require(!beta_grid.empty(), "beta grid must be non-empty when beta is a decision");
    const auto db = static_cast<Eigen::Index>(dim_beta());
    require(db == 1 || db == C.rows(), "beta candidates must have size 1 or dim_y");
    for (const auto& b : beta_grid) {
      require(b.size() == db, "beta candidates must share one dimension");
      require((b.array() > 0.0).all(), "beta candidates must be strictly positive");
    }
  }
  for (const auto& k : kappa) {
    require(k.size() == static_cast<Eigen::Index>(dim_beta()),
            "kappa entries must have dim_beta components");
    require((k.array() >= 0.0).all(), "kappa components must be nonnegative");
    if (!fixed_eps) {
      require((k.array() > 0.0).all(), "kappa components must be positive when beta is a decision");
    }
  }
  if (!fixed_eps) require(!kappa.empty(), "kappa is required when beta is a decision");
}

void ControlProblem::validate() const {
  require(horizon > 0.0, "horizon must be positive");
  for (std::size_t i = 0; i < obs_times.size(); ++i) {
    require(obs_times[i] > 0.0 && obs_times[i] < horizon,
            "observation times must lie in the open interval (0, T)");
    if (i > 0) require(obs_times[i] > obs_times[i - 1], "observation times must increase");
  }
  require(drift && diffusion && likelihood_logdensity && observation_sampler && running_cost &&
              impulse_cost && terminal_cost && initial_law.sample,
          "all problem functions must be set");
  require(dim_x > 0 && dim_alpha > 0 && dim_y > 0 && dim_w > 0 && dim_beta > 0,
          "problem dimensions must be positive");
  const Vector x0 = Vector::Zero(static_cast<Eigen::Index>(dim_x));
  const Vector a0 = Vector::Zero(static_cast<Eigen::Index>(dim_alpha));
  require(drift(0.0, x0, a0).size() == static_cast<Eigen::Index>(dim_x),
          "drift output must have dim_x entries");
  const Matrix s = diffusion(0.0, x0, a0);
  require(s.rows() == static_cast<Eigen::Index>(dim_x) &&
              s.cols() == static_cast<Eigen::Index>(dim_w),
          "diffusion output must be dim_x x dim_w");
  require(!beta_set.empty(), "beta candidate set must be non-empty");
  for (const auto& b : beta_set) {
    require(b.size() == static_cast<Eigen::Index>(dim_beta), "beta candidates must have dim_beta");
  }
  const Vector xi = Vector::Zero(static_cast<Eigen::Index>(dim_y));
  require(observation_sampler(x0, beta_set.front(), 0, xi).size() ==
              static_cast<Eigen::Index>(dim_y),
          "observation sampler output must have dim_y entries");
  if (alpha_set.bounded()) {
    require(alpha_set.lower.size() == static_cast<Eigen::Index>(dim_alpha) &&
                alpha_set.upper.size() == static_cast<Eigen::Index>(dim_alpha),
            "alpha box must have dim_alpha bounds");
    require((alpha_set.lower.array() <= alpha_set.upper.array()).all(),
            "alpha box lower bounds must not exceed upper bounds");
  }
  if (control_affine) {
    require_shape(control_affine->B, static_cast<Eigen::Index>(dim_x),
                  static_cast<Eigen::Index>(dim_alpha), "control-affine B");
    require_shape(control_affine->R, static_cast<Eigen::Index>(dim_alpha),
                  static_cast<Eigen::Index>(dim_alpha), "control-affine R");
  }
}

ControlProblem make_lqg_problem(const LqgSpec& spec, const std::vector<double>& obs_times,
                                double horizon) {
  spec.validate();
  if (!spec.kappa.empty() && spec.kappa.size() != 1 && spec.kappa.size() != obs_times.size()) {
    throw ConfigError("kappa must have one entry or one per observation");
  }
  ControlProblem p;
  p.dim_x = spec.dim_x();
  p.dim_alpha = static_cast<std::size_t>(spec.B.cols());
  p.dim_y = spec.dim_y();
  p.dim_w = static_cast<std::size_t>(spec.sigma.cols());
  p.dim_beta = spec.dim_beta();
  p.horizon = horizon;
  p.obs_times = obs_times;

  const Matrix A = spec.A, B = spec.B, C = spec.C, sigma = spec.sigma;
  const Matrix Q = spec.Q, QT = spec.Q_T, R = spec.R;
  p.drift = [A, B](double, const Vector& x, const Vector& a) { return Vector(A * x + B * a); };
  p.diffusion = [sigma](double, const Vector&, const Vector&) { return sigma; };
  p.constant_diffusion = true;
  p.likelihood_logdensity = [C](const Vector& y, const Vector& x, const Vector& beta,
                                std::size_t) { return log_gaussian_diag(y - C * x, beta); };
  p.observation_sampler = [C](const Vector& x, const Vector& beta, std::size_t,
                              const Vector& xi) {
    Vector y = C * x;
    if (beta.size() == 1) {
      y += beta[0] * xi;
    } else {
      y += beta.cwiseProduct(xi);
    }
    return y;
  };
  p.running_cost = [Q, R](double, const Vector& x, const Vector& a) {
    return 0.5 * (x.dot(Q * x) + a.dot(R * a));
  };
  p.terminal_cost = [QT](const Vector& x) { return 0.5 * x.dot(QT * x); };
  p.impulse_cost = [spec_kappa = spec.kappa, db = spec.dim_beta()](
                       std::size_t n, const Vector&, const Vector& beta) {
    if (spec_kappa.empty()) return 0.0;
    const Vector& k = spec_kappa.size() == 1 ? spec_kappa.front() : spec_kappa.at(n);
    (void)db;
    return observation_cost(beta, k);
  };
  p.initial_law = gaussian_law(spec.m0, spec.Sigma0);
  if (spec.fixed_eps) {
    p.beta_set = {Vector::Constant(1, *spec.fixed_eps)};
  } else {
    p.beta_set = spec.beta_grid;
  }
  p.control_affine = ControlAffine{B, R};
  p.lqg = spec;
  p.validate();
  return p;
}

ControlProblem make_obstacle_problem(const ObstacleSpec& spec,
                                     const std::vector<double>& obs_times, double horizon) {
  spec.validate(horizon);
  ControlProblem p;
  const auto n = static_cast<std::size_t>(spec.x_star.size());
  p.dim_x = n;
  p.dim_alpha = n;
  p.dim_y = static_cast<std::size_t>(spec.C.rows());
  p.dim_w = static_cast<std::size_t>(spec.sigma.cols());
  p.dim_beta = 1;
  p.horizon = horizon;
  p.obs_times = obs_times;

  const Matrix sigma = spec.sigma, C = spec.C;
  p.drift = [](double, const Vector&, const Vector& a) { return a; };
  p.diffusion = [sigma](double, const Vector&, const Vector&) { return sigma; };
  p.constant_diffusion = true;
  p.likelihood_logdensity = [C](const Vector& y, const Vector& x, const Vector& beta,
                                std::size_t) { return log_gaussian_diag(y - C * x, beta); };
  p.observation_sampler = [C](const Vector& x, const Vector& beta, std::size_t,
                              const Vector& xi) { return Vector(C * x + beta[0] * xi); };
  p.running_cost = [spec](double t, const Vector& x, const Vector& a) {
    return obstacle_penalty(t, x, spec) + 0.5 * (x.dot(spec.Q * x) + a.dot(spec.R * a));
  };
  p.terminal_cost = [spec](const Vector& x) {
    const Vector d = x - spec.x_star;
    return 0.5 * d.dot(spec.Q_T * d);
  };
  p.impulse_cost = [](std::size_t, const Vector&, const Vector&) { return 0.0; };
  p.initial_law = gaussian_law(spec.m0, spec.Sigma0);
  p.beta_set = {Vector::Constant(1, spec.eps)};
  p.control_affine = ControlAffine{Matrix::Identity(static_cast<Eigen::Index>(n),
                                                    static_cast<Eigen::Index>(n)),
                                   spec.R};
  p.obstacle = spec;
  p.validate();
  return p;
}

double observation_cost(const Vector& beta, const Vector& kappa) {
  if (beta.size() != kappa.size()) {
    throw DomainError("beta and kappa must have the same dimension");
  }
  double c = 0.0;
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    if (!(beta[i] > 0.0)) throw DomainError("observation noise level beta must be positive");
    if (kappa[i] < 0.0) throw DomainError("observation cost weights must be nonnegative");
    c += kappa[i] / beta[i];
  }
  return c;
}

double obstacle_penalty(double t, const Vector& x, const ObstacleSpec& spec) {
  if (t < spec.t_min || t > spec.t_max) return 0.0;
  const double r = x.norm();
  return (r >= spec.r_in && r <= spec.r_out) ? spec.magnitude : 0.0;
}

std::vector<double> uniform_obs_times(std::size_t n_obs, double horizon) {
  std::vector<double> out;
  out.reserve(n_obs);
  for (std::size_t n = 1; n <= n_obs; ++n) {
    out.push_back(horizon * static_cast<double>(n) / static_cast<double>(n_obs + 1));
  }
  return out;
}

Vector WindowState::flattened() const {
  Vector out(static_cast<Eigen::Index>(capacity_ * dim_y_));
  flatten_into(out.data());
  return out;
}

void WindowState::flatten_into(double* out) const {
  const std::size_t pad = capacity_ - entries_.size();
  std::fill(out, out + pad * dim_y_, 0.0);
  double* p = out + pad * dim_y_;
  for (const auto& e : entries_) {
    std::copy(e.data(), e.data() + e.size(), p);
    p += dim_y_;
  }
}

bool WindowState::operator==(const WindowState& other) const {
  if (capacity_ != other.capacity_ || dim_y_ != other.dim_y_ ||
      entries_.size() != other.entries_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i] != other.entries_[i]) return false;
  }
  return true;
}

WindowState window_update(const WindowState& z, const Vector& y) {
  if (static_cast<std::size_t>(y.size()) != z.dim_y_) {
    throw ConfigError("observation has the wrong dimension for the window");
  }
  WindowState next = z;
  if (next.capacity_ == 0) return next;
  next.entries_.push_back(y);
  while (next.entries_.size() > next.capacity_) next.entries_.pop_front();
  return next;
}

TimeGrid::TimeGrid(double horizon, const std::vector<double>& obs_times, double dt) {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  std::vector<double> bounds{0.0};
  bounds.insert(bounds.end(), obs_times.begin(), obs_times.end());
  bounds.push_back(horizon);
  times_.push_back(0.0);
  obs_at_.push_back(-1);
  for (std::size_t s = 0; s + 1 < bounds.size(); ++s) {
    const double a = bounds[s], b = bounds[s + 1];
    if (!(b > a)) throw ConfigError("observation times must be strictly inside (0, T)");
    const auto steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((b - a) / dt - 1e-9)));
    const double h = (b - a) / static_cast<double>(steps);
    for (std::size_t j = 1; j < steps; ++j) {
      times_.push_back(a + static_cast<double>(j) * h);
      obs_at_.push_back(-1);
    }
    times_.push_back(b);
    if (s + 1 < bounds.size() - 1) {
      obs_nodes_.push_back(times_.size() - 1);
      obs_at_.push_back(static_cast<int>(s));
    } else {
      obs_at_.push_back(-1);
    }
  }
}

std::size_t TimeGrid::obs_before(std::size_t k) const {
  return static_cast<std::size_t>(
      std::lower_bound(obs_nodes_.begin(), obs_nodes_.end(), k) - obs_nodes_.begin());
}

std::size_t TimeGrid::node_of(double t, double tol) const {
  auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
  if (it == times_.end() || std::abs(*it - t) > tol) {
    throw RolloutError("time " + std::to_string(t) + " is not a node of the grid");
  }
  return static_cast<std::size_t>(it - times_.begin());
}

}  // namespace posoc
