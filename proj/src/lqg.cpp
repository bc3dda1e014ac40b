#include "posoc/lqg.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "posoc/kernels.hpp"

namespace posoc {

namespace {

Matrix interpolate(const std::vector<double>& grid, const std::vector<Matrix>& v, double t) {
  if (t <= grid.front()) return v.front();
  if (t >= grid.back()) return v.back();
  const double h = grid[1] - grid[0];
  auto i = static_cast<std::size_t>(std::floor((t - grid.front()) / h));
  i = std::min(i, grid.size() - 2);
  const double w = (t - grid[i]) / (grid[i + 1] - grid[i]);
  if (w <= 0.0) return v[i];
  return (1.0 - w) * v[i] + w * v[i + 1];
}

}  // namespace

Matrix RiccatiSolution::S_at(double t) const { return interpolate(grid, S, t); }
Matrix RiccatiSolution::K_at(double t) const { return interpolate(grid, K, t); }

RiccatiSolution riccati_solve(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R,
                              const Matrix& Q_T, double T, double dt) {
  if (!(dt > 0.0) || !(T > 0.0)) throw ConfigError("riccati_solve needs T > 0 and dt > 0");
  Eigen::FullPivLU<Matrix> lu(R);
  if (R.rows() != R.cols() || !lu.isInvertible()) throw ConfigError("R must be invertible");
  const Matrix Rinv = lu.inverse();
  const Matrix BRB = B * Rinv * B.transpose();
  const Matrix RB = Rinv * B.transpose();

  const auto n = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
  const double h = T / static_cast<double>(n);
  RiccatiSolution sol;
  sol.grid.resize(n + 1);
  sol.S.resize(n + 1);
  sol.K.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) sol.grid[i] = T * static_cast<double>(i) / static_cast<double>(n);

  auto F = [&](const Matrix& S) -> Matrix {
    return A.transpose() * S + S * A - S * BRB * S + Q;
  };
  Matrix S = Q_T;
  sol.S[n] = S;
  for (std::size_t i = n; i-- > 0;) {
    const Matrix k1 = F(S);
    const Matrix k2 = F(S + 0.5 * h * k1);
    const Matrix k3 = F(S + 0.5 * h * k2);
    const Matrix k4 = F(S + h * k3);
    S += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    S = 0.5 * (S + S.transpose()).eval();
    sol.S[i] = S;
  }
  for (std::size_t i = 0; i <= n; ++i) sol.K[i] = RB * sol.S[i];
  return sol;
}

double fosoc_value(const LqgSpec& spec, double T, const RiccatiSolution& ricc) {
  (void)T;
  const Matrix SS = spec.sigma * spec.sigma.transpose();
  const Matrix& S0 = ricc.S.front();
  double v = 0.5 * spec.m0.dot(S0 * spec.m0) + 0.5 * (S0 * spec.Sigma0).trace();
  double integral = 0.0;
  for (std::size_t i = 0; i + 1 < ricc.grid.size(); ++i) {
    const double h = ricc.grid[i + 1] - ricc.grid[i];
    integral += 0.5 * h * ((SS * ricc.S[i]).trace() + (SS * ricc.S[i + 1]).trace());
  }
  return v + 0.5 * integral;
}

namespace {

struct SeparationData {
  Matrix A, B, C;
  Vector m0;
  RiccatiSolution ricc;
  std::vector<Matrix> obs_gain;  // Kalman gain at each observation
  Vector beta;
  double dt;
};

class SeparationController : public Controller {
 public:
  explicit SeparationController(const SeparationData& d) : d_(d), xhat_(d.m0) {}

  Vector alpha(std::size_t, double t, const WindowState&) override {
    return -d_.ricc.K_at(t) * xhat_;
  }
  Vector beta(std::size_t, const WindowState&) override { return d_.beta; }
  void observe(std::size_t n, const Vector& y, const Vector&) override {
    xhat_ += d_.obs_gain[n] * (y - d_.C * xhat_);
  }
  void advance(double t0, double t1, const Vector& a) override {
    const auto steps =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((t1 - t0) / d_.dt - 1e-9)));
    const double h = (t1 - t0) / static_cast<double>(steps);
    const Vector Ba = d_.B * a;
    for (std::size_t j = 0; j < steps; ++j) {
      const Vector k1 = d_.A * xhat_ + Ba;
      const Vector k2 = d_.A * (xhat_ + 0.5 * h * k1) + Ba;
      const Vector k3 = d_.A * (xhat_ + 0.5 * h * k2) + Ba;
      const Vector k4 = d_.A * (xhat_ + h * k3) + Ba;
      xhat_ += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  }

 private:
  const SeparationData& d_;
  Vector xhat_;
};

class SeparationPolicy : public PolicyPair {
 public:
  explicit SeparationPolicy(SeparationData d) : d_(std::move(d)) {}
  std::unique_ptr<Controller> start() const override {
    return std::make_unique<SeparationController>(d_);
  }
  std::string name() const override { return "separation"; }

 private:
  SeparationData d_;
};

}  // namespace

PolicyPtr separation_policy(const LqgSpec& spec, const RiccatiSolution& ricc,
                            const std::vector<double>& obs_times, double dt) {
  if (!spec.fixed_eps) {
    throw ConfigError(
        "separation policy requires exogenous observations; beta is a decision variable here");
  }
  spec.validate();
  SeparationData d{spec.A, spec.B, spec.C, spec.m0, ricc, {}, Vector::Constant(1, *spec.fixed_eps),
                   dt};
  const auto dy = spec.C.rows();
  const Matrix Ry = (*spec.fixed_eps) * (*spec.fixed_eps) * Matrix::Identity(dy, dy);
  const Matrix SS = spec.sigma * spec.sigma.transpose();
  GaussianBelief b{spec.m0, spec.Sigma0};
  double t = 0.0;
  const auto zero = Vector::Zero(spec.B.cols());
  for (double tn : obs_times) {
    if (tn > t) {
      b = kalman_predict(b, t, tn, spec.A, spec.B, SS, [&](double) { return zero; }, dt);
    }
    const Matrix S = spec.C * b.cov * spec.C.transpose() + Ry;
    d.obs_gain.push_back(S.ldlt().solve(spec.C * b.cov).transpose());
    b = kalman_update(b, spec.C * b.mean, spec.C, Ry);
    t = tn;
  }
  return std::make_shared<SeparationPolicy>(std::move(d));
}

std::pair<double, double> evaluate_policy_mc(const ControlProblem& problem,
                                             const PolicyPair& policy, std::size_t M_eval,
                                             double dt, std::uint64_t seed, Execution exec) {
  McOptions opt;
  opt.M = M_eval;
  opt.dt = dt;
  opt.seed = seed;
  const auto r = monte_carlo(problem, policy, opt, exec);
  return {r.mean, r.ci};
}

void write_benchmark_csv(std::ostream& out, const std::vector<BenchmarkRow>& rows) {
  out << "scenario,N_o,method,mean_cost,ci95,M_eval,seed\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.scenario << "," << r.n_obs << "," << r.method << "," << r.mean_cost << "," << r.ci95
        << "," << r.M_eval << "," << r.seed << "\n";
  }
}

}  // namespace posoc
