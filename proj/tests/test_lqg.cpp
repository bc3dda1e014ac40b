#include "doctest.h"

#include <cmath>
#include <sstream>

#include "posoc/lqg.hpp"
#include "posoc/scenario.hpp"

using namespace posoc;

namespace {

Matrix sc(double v) { return Matrix::Constant(1, 1, v); }

LqgSpec table1_spec() {
  LqgSpec s;
  s.A = sc(-0.25);
  s.B = sc(1.0);
  s.C = sc(1.0);
  s.sigma = sc(0.5);
  s.Q = s.Q_T = s.R = sc(2.0);
  s.m0 = Vector::Zero(1);
  s.Sigma0 = sc(1.0);
  s.fixed_eps = 0.1;
  return s;
}

// dS/dtau = q + 2aS - cS^2 with c = b^2/r has fixed points s+, s-; the ratio
// (S - s+)/(S - s-) decays like exp(-2 gamma tau).
double scalar_riccati(double a, double b, double q, double r, double qT, double tau) {
  const double c = b * b / r;
  const double g = std::sqrt(a * a + c * q);
  const double sp = (a + g) / c, sm = (a - g) / c;
  const double rho = (qT - sp) / (qT - sm) * std::exp(-2.0 * g * tau);
  return (sp - rho * sm) / (1.0 - rho);
}

Matrix random_orthogonal(int n, RngStream& rng) {
  Matrix G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
  Eigen::HouseholderQR<Matrix> qr(G);
  return qr.householderQ() * Matrix::Identity(n, n);
}

Matrix random_psd(int n, RngStream& rng) {
  Matrix G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = rng.normal();
  return G * G.transpose() / n;
}

double min_eig(const Matrix& M) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
  return es.eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("riccati without the quadratic term is linear") {
  const RiccatiSolution r = riccati_solve(sc(0), sc(0), sc(2), sc(1), sc(2), 1.0, 1e-2);
  CHECK(r.S.front()(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(r.S.back()(0, 0) == 2.0);
  for (std::size_t i = 0; i < r.grid.size(); ++i)
    CHECK(r.S[i](0, 0) == doctest::Approx(2.0 + 2.0 * (1.0 - r.grid[i])).epsilon(1e-12));
}

TEST_CASE("riccati with zero costs vanishes") {
  const RiccatiSolution r = riccati_solve(sc(-0.25), sc(1), sc(0), sc(2), sc(0), 1.0);
  for (std::size_t i = 0; i < r.grid.size(); ++i) {
    CHECK(r.S[i](0, 0) == 0.0);
    CHECK(r.K[i](0, 0) == 0.0);
  }
}

TEST_CASE("scalar riccati matches the closed form") {
  const double a = -0.25, b = 1, q = 2, r = 2, qT = 2, T = 1;
  const RiccatiSolution sol = riccati_solve(sc(a), sc(b), sc(q), sc(r), sc(qT), T, 1e-3);
  double worst = 0.0;
  for (std::size_t i = 0; i < sol.grid.size(); ++i) {
    const double ex = scalar_riccati(a, b, q, r, qT, T - sol.grid[i]);
    worst = std::max(worst, std::abs(sol.S[i](0, 0) - ex));
    CHECK(sol.K[i](0, 0) == doctest::Approx(b / r * sol.S[i](0, 0)).epsilon(1e-15));
  }
  CHECK(worst <= 1e-8);
  CHECK(sol.S.back()(0, 0) == qT);
}

TEST_CASE("singular R is a configuration error") {
  Matrix R = Matrix::Identity(2, 2);
  R(1, 1) = 0.0;
  CHECK_THROWS_AS(riccati_solve(Matrix::Zero(2, 2), Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                R, Matrix::Identity(2, 2), 1.0),
                  ConfigError);
  CHECK_THROWS_AS(riccati_solve(sc(0), sc(1), sc(1), sc(1), sc(1), 1.0, 0.0), ConfigError);
}

TEST_CASE("riccati solution is symmetric and psd") {
  RngStream rng(4, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 4;
    Matrix A(n, n), B(n, 2);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = 0.5 * rng.normal();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < 2; ++j) B(i, j) = rng.normal();
    const Matrix R = random_psd(2, rng) + Matrix::Identity(2, 2);
    const RiccatiSolution sol =
        riccati_solve(A, B, random_psd(n, rng), R, random_psd(n, rng), 1.0, 1e-2);
    for (const Matrix& S : sol.S) {
      CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
      CHECK(min_eig(S) >= -1e-8);
    }
  }
}

TEST_CASE("riccati is monotone in the terminal weight") {
  RngStream rng(6, 0);
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 3;
    Matrix A(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) A(i, j) = 0.4 * rng.normal();
    const Matrix B = Matrix::Identity(n, n);
    const Matrix Q = random_psd(n, rng);
    const Matrix R = Matrix::Identity(n, n);
    const Matrix QT1 = random_psd(n, rng);
    const Matrix QT2 = QT1 + random_psd(n, rng);
    const RiccatiSolution s1 = riccati_solve(A, B, Q, R, QT1, 1.0, 1e-2);
    const RiccatiSolution s2 = riccati_solve(A, B, Q, R, QT2, 1.0, 1e-2);
    for (std::size_t i = 0; i < s1.S.size(); ++i) CHECK(min_eig(s2.S[i] - s1.S[i]) >= -1e-10);
  }
}

TEST_CASE("riccati commutes with orthogonal changes of coordinates") {
  RngStream rng(12, 0);
  const int n = 4;
  Matrix A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = 0.3 * rng.normal();
  const Matrix B = Matrix::Identity(n, n), R = 2.0 * Matrix::Identity(n, n);
  const Matrix Q = random_psd(n, rng), QT = random_psd(n, rng);
  const Matrix U = random_orthogonal(n, rng);
  const RiccatiSolution s = riccati_solve(A, B, Q, R, QT, 1.0, 1e-2);
  const RiccatiSolution u = riccati_solve(U * A * U.transpose(), U * B, U * Q * U.transpose(), R,
                                          U * QT * U.transpose(), 1.0, 1e-2);
  for (std::size_t i = 0; i < s.S.size(); ++i)
    CHECK((U * s.S[i] * U.transpose() - u.S[i]).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("interpolated gain") {
  const RiccatiSolution r = riccati_solve(sc(0), sc(0), sc(2), sc(1), sc(2), 1.0, 0.1);
  CHECK(r.S_at(0.05)(0, 0) == doctest::Approx(3.9).epsilon(1e-12));
  CHECK(r.S_at(-1.0)(0, 0) == r.S.front()(0, 0));
  CHECK(r.S_at(2.0)(0, 0) == 2.0);
}

TEST_CASE("fully observed value") {
  LqgSpec s = table1_spec();
  SUBCASE("deterministic zero start") {
    s.sigma = sc(0);
    s.Sigma0 = sc(0);
    const RiccatiSolution r = riccati_solve(s.A, s.B, s.Q, s.R, s.Q_T, 1.0);
    CHECK(fosoc_value(s, 1.0, r) == 0.0);
  }
  SUBCASE("zero cost") {
    s.Q = s.Q_T = sc(0);
    const RiccatiSolution r = riccati_solve(s.A, s.B, s.Q, s.R, s.Q_T, 1.0);
    CHECK(fosoc_value(s, 1.0, r) == 0.0);
  }
  SUBCASE("deterministic start gives the quadratic form") {
    s.sigma = sc(0);
    s.Sigma0 = sc(0);
    s.m0 = Vector::Constant(1, 1.3);
    const RiccatiSolution r = riccati_solve(s.A, s.B, s.Q, s.R, s.Q_T, 1.0);
    const double S0 = scalar_riccati(-0.25, 1, 2, 2, 2, 1.0);
    CHECK(fosoc_value(s, 1.0, r) == doctest::Approx(0.5 * 1.69 * S0).epsilon(1e-9));
  }
  SUBCASE("shipped table 1 scenario") {
    const Scenario sc1 = load_scenario(POSOC_SOURCE_DIR "/scenarios/table1.json");
    const LqgSpec& l = *sc1.lqg;
    const RiccatiSolution r = riccati_solve(l.A, l.B, l.Q, l.R, l.Q_T, sc1.horizon, sc1.riccati_dt);
    CHECK(std::abs(fosoc_value(l, sc1.horizon, r) - 1.024) <= 0.005);
  }
}

TEST_CASE("separation refuses a decided beta") {
  LqgSpec s = table1_spec();
  s.fixed_eps.reset();
  s.beta_grid = {Vector::Constant(1, 0.3)};
  s.kappa = {Vector::Constant(1, 0.1)};
  const RiccatiSolution r = riccati_solve(s.A, s.B, s.Q, s.R, s.Q_T, 1.0);
  CHECK_THROWS_AS(separation_policy(s, r, {0.5}, 0.01), ConfigError);
}

TEST_CASE("separation with zero costs never acts") {
  LqgSpec s = table1_spec();
  s.Q = s.Q_T = sc(0);
  const RiccatiSolution r = riccati_solve(s.A, s.B, s.Q, s.R, s.Q_T, 1.0);
  const auto obs = uniform_obs_times(5);
  const ControlProblem p = make_lqg_problem(s, obs);
  const auto pol = separation_policy(s, r, obs, 0.01);
  for (std::uint64_t id = 0; id < 5; ++id) {
    const Rollout ro = rollout(p, *pol, 0.01, 3, id);
    for (const auto& a : ro.controls_alpha) CHECK(a[0] == 0.0);
  }
  const auto [mean, ci] = evaluate_policy_mc(p, *pol, 100, 0.01, 1);
  CHECK(mean == 0.0);
  CHECK(ci == 0.0);
}

TEST_CASE("deterministic problem has zero spread") {
  LqgSpec s = table1_spec();
  s.sigma = sc(0);
  s.Sigma0 = sc(0);
  s.m0 = Vector::Constant(1, 0.8);
  const std::vector<double> obs;
  const ControlProblem p = make_lqg_problem(s, obs);
  const RiccatiSolution r = riccati_solve(s.A, s.B, s.Q, s.R, s.Q_T, 1.0);
  const auto [mean, ci] = evaluate_policy_mc(p, *separation_policy(s, r, obs, 0.01), 50, 0.01, 5);
  CHECK(mean > 0.0);
  CHECK(ci == 0.0);
}

TEST_CASE("near perfect observation approaches the fully observed value") {
  LqgSpec s = table1_spec();
  s.fixed_eps = 1e-3;
  const double h = 2e-3;
  std::vector<double> obs;
  for (int k = 1; k < 500; ++k) obs.push_back(k * h);
  const ControlProblem p = make_lqg_problem(s, obs);
  const RiccatiSolution r = riccati_solve(s.A, s.B, s.Q, s.R, s.Q_T, 1.0);
  const double fo = fosoc_value(s, 1.0, r);
  const auto [mean, ci] = evaluate_policy_mc(p, *separation_policy(s, r, obs, h), 40000, h, 9);
  MESSAGE("perfect-observation cost " << mean << " +- " << ci << ", fosoc " << fo);
  CHECK(std::abs(mean - fo) <= ci);
}

TEST_CASE("separation cost on table 1 with five observations") {
  const Scenario sc1 = load_scenario(POSOC_SOURCE_DIR "/scenarios/table1.json");
  const LqgSpec& l = *sc1.lqg;
  const auto obs = sc1.schedule(5);
  const RiccatiSolution r = riccati_solve(l.A, l.B, l.Q, l.R, l.Q_T, sc1.horizon, sc1.riccati_dt);
  const auto [mean, ci] = evaluate_policy_mc(sc1.problem(obs),
                                             *separation_policy(l, r, obs, sc1.eval_dt),
                                             sc1.M_eval, sc1.eval_dt, sc1.eval_seed);
  CHECK(std::abs(mean - 1.150) <= 0.01);
  CHECK(ci < 0.01);
}

TEST_CASE("benchmark csv") {
  std::ostringstream os;
  write_benchmark_csv(os, {{"table1", 5, "separation", 1.15, 0.01, 100000, 7},
                           {"table1", 5, "fosoc", 1.024, 0.0, 0, 7}});
  const std::string s = os.str();
  CHECK(s.rfind("scenario,N_o,method,mean_cost,ci95,M_eval,seed\n", 0) == 0);
  CHECK(s.find("table1,5,separation,1.15,0.01,100000,7\n") != std::string::npos);
  CHECK(std::count(s.begin(), s.end(), '\n') == 3);
}
