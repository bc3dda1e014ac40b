#include "posoc/sde.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace posoc {

Vector em_step(const Vector& x, double t, const Vector& alpha, double dt, const Vector& noise,
               const ControlProblem& problem, std::size_t trajectory) {
  if (!(dt > 0.0)) throw DomainError("em_step: dt must be positive");
  Vector out = x + problem.drift(t, x, alpha) * dt +
               problem.diffusion(t, x, alpha) * (std::sqrt(dt) * noise);
  if (!out.allFinite()) {
    throw PropagationError("non-finite state at t=" + std::to_string(t), trajectory);
  }
  return out;
}

namespace {

class ConstantController : public Controller {
 public:
  ConstantController(const Vector& a, const Vector& b) : a_(a), b_(b) {}
  Vector alpha(std::size_t, double, const WindowState&) override { return a_; }
  Vector beta(std::size_t, const WindowState&) override { return b_; }

 private:
  const Vector& a_;
  const Vector& b_;
};

class ConstantPolicy : public PolicyPair {
 public:
  ConstantPolicy(Vector a, Vector b, std::string name)
      : a_(std::move(a)), b_(std::move(b)), name_(std::move(name)) {}
  std::unique_ptr<Controller> start() const override {
    return std::make_unique<ConstantController>(a_, b_);
  }
  std::string name() const override { return name_; }

 private:
  Vector a_, b_;
  std::string name_;
};

}  // namespace

PolicyPtr constant_policy(const Vector& alpha, const Vector& beta, std::string name) {
  return std::make_shared<ConstantPolicy>(alpha, beta, std::move(name));
}

PolicyPtr zero_control_policy(const ControlProblem& problem) {
  return constant_policy(Vector::Zero(static_cast<Eigen::Index>(problem.dim_alpha)),
                         problem.beta_set.front(), "zero");
}

double Rollout::total_cost() const {
  // backward suffix sum, the order the regression targets use
  double s = terminal_cost_value;
  std::size_t n = obs_nodes.size();
  for (std::size_t k = times.size(); k-- > 0;) {
    if (k < stage_costs.size()) s += stage_costs[k];
    if (n > 0 && obs_nodes[n - 1] == k) s += impulse_costs[--n];
  }
  return s;
}

Rollout rollout(const ControlProblem& problem, const PolicyPair& policy, const TimeGrid& grid,
                std::uint64_t seed, std::uint64_t stream_id) {
  RngStream state_rng(seed, stream_id, 0);
  RngStream obs_rng(seed, stream_id, 1);
  auto ctl = policy.start();
  const auto dw = static_cast<Eigen::Index>(problem.dim_w);
  const auto dy = static_cast<Eigen::Index>(problem.dim_y);

  Rollout r;
  r.times = grid.times();
  r.states.reserve(grid.n_nodes());
  r.states.push_back(problem.initial_law.sample(state_rng));
  WindowState z(policy.window_length(), problem.dim_y);
  Vector noise(dw), xi(dy);

  for (std::size_t k = 0; k < grid.n_nodes(); ++k) {
    const int n = grid.obs_at(k);
    if (n >= 0) {
      const auto obs = static_cast<std::size_t>(n);
      const Vector& x = r.states.back();
      Vector b;
      try {
        b = ctl->beta(obs, z);
      } catch (const Error& e) {
        throw RolloutError(std::string("beta policy failed: ") + e.what());
      }
      obs_rng.normals(xi);
      Vector y = problem.observation_sampler(x, b, obs, xi);
      r.impulse_costs.push_back(problem.impulse_cost(obs, x, b));
      z = window_update(z, y);
      ctl->observe(obs, y, b);
      r.observations.push_back(std::move(y));
      r.controls_beta.push_back(std::move(b));
      r.windows.push_back(z);
      r.obs_nodes.push_back(k);
    }
    if (k + 1 == grid.n_nodes()) break;
    const double t = grid.time(k), h = grid.step(k);
    Vector a;
    try {
      a = ctl->alpha(k, t, z);
    } catch (const Error& e) {
      throw RolloutError(std::string("alpha policy failed: ") + e.what());
    }
    const Vector& x = r.states.back();
    r.stage_costs.push_back(problem.running_cost(t, x, a) * h);
    state_rng.normals(noise);
    r.states.push_back(em_step(x, t, a, h, noise, problem, stream_id));
    ctl->advance(t, t + h, a);
    r.controls_alpha.push_back(std::move(a));
  }
  r.terminal_cost_value = problem.terminal_cost(r.states.back());
  return r;
}

Rollout rollout(const ControlProblem& problem, const PolicyPair& policy, double dt,
                std::uint64_t seed, std::uint64_t stream_id) {
  return rollout(problem, policy, TimeGrid(problem.horizon, problem.obs_times, dt), seed,
                 stream_id);
}

void write_rollout_csv(std::ostream& states_out, std::ostream& obs_out,
                       const std::vector<Rollout>& rollouts) {
  states_out << std::setprecision(17);
  obs_out << std::setprecision(17);
  if (rollouts.empty()) return;
  const auto& r0 = rollouts.front();
  states_out << "trajectory_id,t";
  for (Eigen::Index i = 0; i < r0.states.front().size(); ++i) states_out << ",x_" << i + 1;
  const Eigen::Index da = r0.controls_alpha.empty() ? 0 : r0.controls_alpha.front().size();
  for (Eigen::Index i = 0; i < da; ++i) states_out << ",alpha_" << i + 1;
  states_out << ",cumulative_cost\n";
  obs_out << "trajectory_id,n,t_n";
  const Eigen::Index dy = r0.observations.empty() ? 0 : r0.observations.front().size();
  const Eigen::Index db = r0.controls_beta.empty() ? 0 : r0.controls_beta.front().size();
  for (Eigen::Index i = 0; i < dy; ++i) obs_out << ",y_" << i + 1;
  for (Eigen::Index i = 0; i < db; ++i) obs_out << ",beta_" << i + 1;
  obs_out << "\n";

  for (std::size_t id = 0; id < rollouts.size(); ++id) {
    const auto& r = rollouts[id];
    double cum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < r.states.size(); ++k) {
      // cumulative cost after everything charged at node k (impulse included)
      if (n < r.obs_nodes.size() && r.obs_nodes[n] == k) cum += r.impulse_costs[n++];
      states_out << id << "," << r.times[k];
      for (Eigen::Index i = 0; i < r.states[k].size(); ++i) states_out << "," << r.states[k][i];
      for (Eigen::Index i = 0; i < da; ++i) {
        states_out << "," << (k < r.controls_alpha.size() ? r.controls_alpha[k][i] : 0.0);
      }
      if (k + 1 == r.states.size()) cum += r.terminal_cost_value;
      states_out << "," << cum << "\n";
      if (k < r.stage_costs.size()) cum += r.stage_costs[k];
    }
    for (std::size_t j = 0; j < r.observations.size(); ++j) {
      obs_out << id << "," << j << "," << r.times[r.obs_nodes[j]];
      for (Eigen::Index i = 0; i < r.observations[j].size(); ++i) {
        obs_out << "," << r.observations[j][i];
      }
      for (Eigen::Index i = 0; i < r.controls_beta[j].size(); ++i) {
        obs_out << "," << r.controls_beta[j][i];
      }
      obs_out << "\n";
    }
  }
}

}  // namespace posoc
