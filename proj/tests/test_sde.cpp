#include "doctest.h"

#include <cmath>
#include <sstream>

#include "posoc/kernels.hpp"
#include "posoc/sde.hpp"

using namespace posoc;

namespace {

LqgSpec ou_spec(double q = 2.0) {
  LqgSpec s;
  s.A = Matrix::Constant(1, 1, -0.25);
  s.B = Matrix::Identity(1, 1);
  s.C = Matrix::Identity(1, 1);
  s.sigma = Matrix::Constant(1, 1, 0.5);
  s.Q = s.Q_T = Matrix::Constant(1, 1, q);
  s.R = Matrix::Constant(1, 1, 2.0);
  s.m0 = Vector::Zero(1);
  s.Sigma0 = Matrix::Identity(1, 1);
  s.fixed_eps = 0.1;
  return s;
}

Vector one(double v) { return Vector::Constant(1, v); }

}  // namespace

TEST_CASE("euler maruyama step") {
  LqgSpec s = ou_spec();
  SUBCASE("no dynamics") {
    s.A.setZero();
    s.sigma.setZero();
    const ControlProblem p = make_lqg_problem(s, {});
    CHECK(em_step(one(1.7), 0.0, one(0.0), 0.01, one(0.3), p)[0] == 1.7);
  }
  SUBCASE("pure drift") {
    s.A.setZero();
    s.sigma.setZero();
    const ControlProblem p = make_lqg_problem(s, {});
    CHECK(em_step(one(2.0), 0.0, one(1.0), 0.01, one(0.0), p)[0] == doctest::Approx(2.01).epsilon(1e-15));
  }
  SUBCASE("hand evaluation") {
    const ControlProblem p = make_lqg_problem(s, {});
    const double expect = 4.0 - 0.1 + 0.5 * std::sqrt(0.1);
    CHECK(em_step(one(4.0), 0.0, one(0.0), 0.1, one(1.0), p)[0] == doctest::Approx(expect).epsilon(1e-14));
    CHECK(expect == doctest::Approx(4.05811).epsilon(1e-5));
  }
  SUBCASE("overflow names the trajectory") {
    s.A = Matrix::Constant(1, 1, 1e308);
    const ControlProblem p = make_lqg_problem(s, {});
    try {
      em_step(one(10.0), 0.0, one(0.0), 0.1, one(0.0), p, 42);
      FAIL("expected a propagation error");
    } catch (const PropagationError& e) {
      CHECK(e.trajectory() == 42);
    }
  }
}

TEST_CASE("rng streams replay") {
  RngStream a(5, 7, 1), b(5, 7, 1), c(5, 8, 1), d(5, 7, 0);
  bool differs_c = false, differs_d = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
    differs_c |= x != c.normal();
    differs_d |= x != d.normal();
  }
  CHECK(differs_c);
  CHECK(differs_d);
  RngStream u(1, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v >= 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("rollout bookkeeping") {
  const ControlProblem p = make_lqg_problem(ou_spec(), {0.25, 0.5, 0.75});
  const auto policy = zero_control_policy(p);
  const Rollout r = rollout(p, *policy, 0.01, 11, 3);
  CHECK(r.states.size() == r.times.size());
  CHECK(r.stage_costs.size() + 1 == r.times.size());
  CHECK(r.controls_alpha.size() + 1 == r.times.size());
  REQUIRE(r.observations.size() == 3);
  CHECK(r.impulse_costs.size() == 3);
  CHECK(r.controls_beta.size() == 3);
  for (std::size_t n = 0; n < 3; ++n) CHECK(r.times[r.obs_nodes[n]] == doctest::Approx(p.obs_times[n]));
  double sum = r.terminal_cost_value;
  std::size_t n = 3;
  for (std::size_t k = r.times.size(); k-- > 0;) {
    if (k < r.stage_costs.size()) sum += r.stage_costs[k];
    if (n > 0 && r.obs_nodes[n - 1] == k) sum += r.impulse_costs[--n];
  }
  CHECK(r.total_cost() == sum);
  CHECK(r.windows.back().size() == 1);
  CHECK(r.windows.back().at(0) == r.observations.back());
}

TEST_CASE("rollouts are deterministic per stream") {
  const ControlProblem p = make_lqg_problem(ou_spec(), {0.5});
  const auto policy = constant_policy(one(0.3), one(0.1));
  const Rollout a = rollout(p, *policy, 0.01, 99, 4);
  const Rollout b = rollout(p, *policy, 0.01, 99, 4);
  const Rollout c = rollout(p, *policy, 0.01, 99, 5);
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t k = 0; k < a.states.size(); ++k) CHECK(a.states[k] == b.states[k]);
  CHECK(a.total_cost() == b.total_cost());
  CHECK(a.total_cost() != c.total_cost());
}

TEST_CASE("zero costs and no observations") {
  LqgSpec s = ou_spec(0.0);
  const ControlProblem p0 = make_lqg_problem(s, {0.5});
  const Rollout r = rollout(p0, *zero_control_policy(p0), 0.01, 1, 0);
  CHECK(r.total_cost() == 0.0);

  const ControlProblem p = make_lqg_problem(ou_spec(), {});
  const Rollout q = rollout(p, *zero_control_policy(p), 0.01, 1, 0);
  CHECK(q.observations.empty());
  CHECK(q.impulse_costs.empty());
  double sum = q.terminal_cost_value;
  for (std::size_t k = q.stage_costs.size(); k-- > 0;) sum += q.stage_costs[k];
  CHECK(q.total_cost() == sum);
}

TEST_CASE("uncontrolled cost matches the OU moment integral") {
  // E X_t^2 = S0 e^{2At} + s^2 (e^{2At} - 1) / (2A), m0 = 0.
  const double A = -0.25, s2 = 0.25, S0 = 1.0, T = 1.0, q = 2.0;
  const double e = std::exp(2 * A * T);
  const double vT = S0 * e + s2 * (e - 1) / (2 * A);
  const double iv = S0 * (e - 1) / (2 * A) + s2 / (2 * A) * ((e - 1) / (2 * A) - T);
  const double expect = 0.5 * q * iv + 0.5 * q * vT;

  const ControlProblem p = make_lqg_problem(ou_spec(q), uniform_obs_times(5));
  McOptions opt;
  opt.M = 100000;
  opt.dt = 0.01;
  opt.seed = 2;
  const McResult r = monte_carlo(p, *zero_control_policy(p), opt);
  const double se = r.ci / 1.96;
  CHECK(std::abs(r.mean - expect) <= 3 * se);
  REQUIRE(r.cost_to_go.size() == r.times.size());
  CHECK(r.cost_to_go.front() == doctest::Approx(r.mean).epsilon(1e-12));
}

TEST_CASE("terminal moments of the OU process") {
  const double A = -0.25, sig = 0.5, m0 = 1.0, S0 = 0.5, T = 1.0, h = 0.01;
  LqgSpec s = ou_spec();
  s.m0 = one(m0);
  s.Sigma0 = Matrix::Constant(1, 1, S0);
  const ControlProblem p = make_lqg_problem(s, {});
  const std::size_t M = 100000;
  std::vector<Vector> x(M);
  std::vector<RngStream> rngs;
  rngs.reserve(M);
  for (std::size_t m = 0; m < M; ++m) {
    rngs.emplace_back(17, m);
    x[m] = p.initial_law.sample(rngs[m]);
  }
  const auto zero = [](std::size_t, const Vector&) { return one(0.0); };
  for (int k = 0; k < 100; ++k) em_sweep(x, rngs, zero, k * h, h, p);
  double mean = 0.0, sq = 0.0;
  for (const auto& v : x) mean += v[0];
  mean /= M;
  for (const auto& v : x) sq += (v[0] - mean) * (v[0] - mean);
  const double var = sq / (M - 1);
  const double e = std::exp(2 * A * T);
  const double var_expect = S0 * e + sig * sig * (e - 1) / (2 * A);
  CHECK(std::abs(mean - m0 * std::exp(A * T)) <= 4 * std::sqrt(var_expect / M));
  CHECK(std::abs(var - var_expect) <= 4 * std::sqrt(2.0 / M) * var_expect);
}

TEST_CASE("serial and parallel monte carlo agree bit for bit") {
  const ControlProblem p = make_lqg_problem(ou_spec(), {0.3, 0.6});
  const auto policy = constant_policy(one(-0.2), one(0.1));
  McOptions opt;
  opt.M = 3000;
  opt.seed = 8;
  const McResult a = monte_carlo(p, *policy, opt, Execution::serial);
  const McResult b = monte_carlo(p, *policy, opt, Execution::parallel);
  CHECK(a.mean == b.mean);
  CHECK(a.ci == b.ci);
  CHECK(a.costs == b.costs);
  CHECK(a.cost_to_go == b.cost_to_go);
}

TEST_CASE("rollout csv dump") {
  const ControlProblem p = make_lqg_problem(ou_spec(), {0.5});
  const auto policy = zero_control_policy(p);
  std::vector<Rollout> rs{rollout(p, *policy, 0.1, 1, 0), rollout(p, *policy, 0.1, 1, 1)};
  std::ostringstream st, ob;
  write_rollout_csv(st, ob, rs);
  const std::string s = st.str(), o = ob.str();
  CHECK(s.rfind("trajectory_id,t,x_1,alpha_1,cumulative_cost", 0) == 0);
  CHECK(o.rfind("trajectory_id,n,t_n,y_1,beta_1", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 1 + 2 * 11);
  CHECK(std::count(o.begin(), o.end(), '\n') == 1 + 2);
}
