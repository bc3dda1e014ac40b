#include "posoc/discrete.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "posoc/filtering.hpp"
#include "posoc/kernels.hpp"
#include "posoc/model.hpp"
#include "posoc/rng.hpp"

namespace posoc {

namespace {

using nlohmann::json;

constexpr double kRowTol = 1e-12;

Matrix matrix_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError(where + ": expected a nonempty array of rows");
  const std::size_t r = j.size(), c = j[0].size();
  Matrix M(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (!j[i].is_array() || j[i].size() != c)
      throw ConfigError(where + "[" + std::to_string(i) + "]: ragged row");
    for (std::size_t k = 0; k < c; ++k) {
      if (!j[i][k].is_number())
        throw ConfigError(where + "[" + std::to_string(i) + "][" + std::to_string(k) + "]: not a number");
      M(i, k) = j[i][k].get<double>();
    }
  }
  return M;
}

Vector vector_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: not a number");
    v(i) = j[i].get<double>();
  }
  return v;
}

const json& field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("missing field '") + key + "'");
  return *it;
}

TimeGrid chain_grid(const FiniteChain& chain) {
  return TimeGrid(chain.horizon, chain.obs_times, chain.dt);
}

double pair(const Vector& a, const Vector& b) { return a.dot(b); }

// Alpha vector with provenance. On slab steps `action` is a and succ[0] the
// successor at node k+1; at an observation, `action` is b and succ[o] indexes
// the post-observation set of the same node.
struct AlphaVec {
  Vector U;
  int action = -1;
  std::vector<std::size_t> succ;
};

using AlphaSet = std::vector<AlphaVec>;

// Keeps the vectors that attain the lower envelope min <U, mu> on a set of
// positive measure of the simplex (exact for two states), or drops pointwise
// dominated ones. Vectors within kDupTol of an earlier one count as copies.
constexpr double kDupTol = 1e-13;

AlphaSet prune(AlphaSet in) {
  const std::size_t n = in.size();
  if (n <= 1) return in;
  const std::size_t S = static_cast<std::size_t>(in[0].U.size());
  std::vector<char> keep(n, 1);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i && keep[i]; ++j)
      if (keep[j] && (in[i].U - in[j].U).cwiseAbs().maxCoeff() <= kDupTol) keep[i] = 0;
  if (S == 2) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!keep[i]) continue;
      double lo = 0.0, hi = 1.0;
      for (std::size_t j = 0; j < n && hi - lo > kDupTol; ++j) {
        if (j == i || !keep[j]) continue;
        const double d0 = in[i].U(0) - in[j].U(0);
        const double d1 = in[i].U(1) - in[j].U(1);
        // U_i <= U_j where d0 + p (d1 - d0) <= 0
        const double slope = d1 - d0;
        if (slope == 0.0) {
          if (d0 > 0.0) hi = -1.0;
        } else if (slope > 0.0) {
          hi = std::min(hi, -d0 / slope);
        } else {
          lo = std::max(lo, -d0 / slope);
        }
      }
      keep[i] = hi - lo > kDupTol;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n && keep[i]; ++j)
        if (j != i && keep[j] && (in[j].U.array() <= in[i].U.array() + kDupTol).all()) keep[i] = 0;
  }
  AlphaSet out;
  for (std::size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(std::move(in[i]));
  return out;
}

std::size_t argmin_pair(const AlphaSet& set, const Vector& mu) {
  std::size_t best = 0;
  double v = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double p = pair(set[i].U, mu);
    if (p < v) {
      v = p;
      best = i;
    }
  }
  return best;
}

void check_action(std::size_t a, std::size_t n, const char* what) {
  if (a >= n) throw DomainError(std::string(what) + " index out of range");
}

}  // namespace

void FiniteChain::validate() const {
  const std::size_t S = n_states;
  if (S == 0) throw ConfigError("chain: n_states must be positive");
  if (rate_matrices.empty()) throw ConfigError("chain: at least one action required");
  if (emissions.empty() && !obs_times.empty())
    throw ConfigError("chain: observation times without emission tables");
  for (std::size_t a = 0; a < rate_matrices.size(); ++a) {
    const Matrix& G = rate_matrices[a];
    if (static_cast<std::size_t>(G.rows()) != S || static_cast<std::size_t>(G.cols()) != S)
      throw ConfigError("chain: rate matrix " + std::to_string(a) + " is not S x S");
    for (std::size_t i = 0; i < S; ++i) {
      if (std::abs(G.row(i).sum()) > kRowTol)
        throw ConfigError("chain: rate matrix " + std::to_string(a) + " row " + std::to_string(i) +
                          " does not sum to zero");
      for (std::size_t j = 0; j < S; ++j)
        if (i != j && G(i, j) < 0.0)
          throw ConfigError("chain: negative off-diagonal rate in matrix " + std::to_string(a));
      if (1.0 + dt * G(i, i) < 0.0)
        throw ConfigError("chain: dt too large for rate matrix " + std::to_string(a));
    }
  }
  const std::size_t O = n_symbols();
  for (std::size_t b = 0; b < emissions.size(); ++b) {
    const Matrix& E = emissions[b];
    if (static_cast<std::size_t>(E.rows()) != S || static_cast<std::size_t>(E.cols()) != O || O == 0)
      throw ConfigError("chain: emission table " + std::to_string(b) + " has wrong shape");
    if ((E.array() < 0.0).any())
      throw ConfigError("chain: negative emission probability in table " + std::to_string(b));
    for (std::size_t i = 0; i < S; ++i)
      if (std::abs(E.row(i).sum() - 1.0) > kRowTol)
        throw ConfigError("chain: emission table " + std::to_string(b) + " row " +
                          std::to_string(i) + " does not sum to one");
  }
  if (static_cast<std::size_t>(running_cost.rows()) != S ||
      static_cast<std::size_t>(running_cost.cols()) != n_actions())
    throw ConfigError("chain: running cost must be S x A");
  if (!emissions.empty() && (static_cast<std::size_t>(observation_cost.rows()) != S ||
                             static_cast<std::size_t>(observation_cost.cols()) != n_obs_actions()))
    throw ConfigError("chain: observation cost must be S x B");
  if (static_cast<std::size_t>(terminal_cost.size()) != S)
    throw ConfigError("chain: terminal cost must have S entries");
  if (static_cast<std::size_t>(initial_belief.size()) != S || (initial_belief.array() < 0.0).any() ||
      std::abs(initial_belief.sum() - 1.0) > kRowTol)
    throw ConfigError("chain: initial belief must be a probability vector");
  if (!(horizon > 0.0) || !(dt > 0.0)) throw ConfigError("chain: horizon and dt must be positive");
  double prev = 0.0;
  for (double t : obs_times) {
    if (!(t > prev) || !(t < horizon)) throw ConfigError("chain: observation times must increase inside (0, T)");
    prev = t;
  }
}

FiniteChain FiniteChain::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("chain: parse error at byte ") + std::to_string(e.byte) + ": " + e.what());
  }
  FiniteChain c;
  try {
    c.n_states = field(j, "n_states").get<std::size_t>();
    const json& act = field(j, "actions");
    const std::size_t A = field(act, "control").get<std::size_t>();
    const std::size_t B = act.value("observation", std::size_t{0});
    const json& rates = field(j, "rate_matrices");
    if (!rates.is_array() || rates.size() != A) throw ConfigError("rate_matrices: expected one matrix per action");
    for (std::size_t a = 0; a < A; ++a)
      c.rate_matrices.push_back(matrix_from(rates[a], "rate_matrices[" + std::to_string(a) + "]"));
    if (B > 0) {
      const json& em = field(j, "emissions");
      if (!em.is_array() || em.size() != B) throw ConfigError("emissions: expected one table per observation action");
      for (std::size_t b = 0; b < B; ++b)
        c.emissions.push_back(matrix_from(em[b], "emissions[" + std::to_string(b) + "]"));
    }
    const json& costs = field(j, "costs");
    c.running_cost = matrix_from(field(costs, "running"), "costs.running");
    if (B > 0) c.observation_cost = matrix_from(field(costs, "observation"), "costs.observation");
    c.terminal_cost = vector_from(field(costs, "terminal"), "costs.terminal");
    c.initial_belief = vector_from(field(j, "initial_belief"), "initial_belief");
    c.obs_times = field(j, "obs_times").get<std::vector<double>>();
    c.horizon = j.value("horizon", 1.0);
    c.dt = field(j, "dt").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
  c.validate();
  return c;
}

FiniteChain FiniteChain::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

DiscreteBelief forward_belief_step(const DiscreteBelief& mu, std::size_t a, double dt,
                                   const FiniteChain& chain) {
  check_action(a, chain.n_actions(), "action");
  DiscreteBelief next = mu + dt * (chain.rate_matrices[a].transpose() * mu);
  if ((next.array() < -kRowTol).any())
    throw DomainError("forward_belief_step: negative mass, reduce dt");
  next = next.cwiseMax(0.0);
  return next / next.sum();
}

BayesJump bayes_jump(const DiscreteBelief& mu_pre, std::size_t o, std::size_t b,
                     const FiniteChain& chain) {
  check_action(b, chain.n_obs_actions(), "observation action");
  check_action(o, chain.n_symbols(), "symbol");
  Vector w = chain.emissions[b].col(o).cwiseProduct(mu_pre);
  const double L = w.sum();
  if (!(L > 0.0)) throw DegeneracyError("bayes_jump: symbol has zero predictive probability");
  return {w / L, L};
}

Vector backward_U_step(const Vector& U, std::size_t a, double dt, const FiniteChain& chain) {
  check_action(a, chain.n_actions(), "action");
  return U + dt * (chain.rate_matrices[a] * U + chain.running_cost.col(a));
}

Vector u_jump(const std::vector<Vector>& U_post, const Vector& c_b, std::size_t b,
              const FiniteChain& chain) {
  check_action(b, chain.n_obs_actions(), "observation action");
  if (U_post.size() != chain.n_symbols()) throw DomainError("u_jump: one vector per symbol required");
  Vector out = c_b;
  const Matrix& E = chain.emissions[b];
  for (std::size_t o = 0; o < U_post.size(); ++o) out += U_post[o].cwiseProduct(E.col(o));
  return out;
}

Vector lambda_jump(const std::vector<Vector>& lambda_post, const Vector& c_b, std::size_t b,
                   const DiscreteBelief& mu_pre, const FiniteChain& chain) {
  Vector out = u_jump(lambda_post, c_b, b, chain);
  const Matrix& E = chain.emissions[b];
  for (std::size_t o = 0; o < lambda_post.size(); ++o) {
    const Vector w = E.col(o).cwiseProduct(mu_pre);
    const double L = w.sum();
    const double num = w.dot(lambda_post[o]);
    if (L == 0.0) {
      if (num != 0.0) throw DegeneracyError("lambda_jump: zero likelihood with nonzero numerator");
      continue;
    }
    out -= (num / L) * E.col(o);
  }
  return out;
}

HamiltonianMin hamiltonian_continuous(const DiscreteBelief& mu, const Vector& U,
                                      const FiniteChain& chain) {
  HamiltonianMin best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t a = 0; a < chain.n_actions(); ++a) {
    const double v = mu.dot(chain.running_cost.col(a) + chain.rate_matrices[a] * U);
    if (v < best.value) best = {v, a};
  }
  return best;
}

Vector hamiltonian_flow(const DiscreteBelief& mu, const Vector& U, const FiniteChain& chain) {
  const std::size_t a = hamiltonian_continuous(mu, U, chain).action;
  return chain.rate_matrices[a].transpose() * mu;
}

HamiltonianMin hamiltonian_discrete(const DiscreteBelief& mu_pre, const std::vector<Vector>& U_post,
                                    const FiniteChain& chain) {
  if (chain.n_obs_actions() == 0) throw DomainError("hamiltonian_discrete: no observation actions");
  HamiltonianMin best{std::numeric_limits<double>::infinity(), 0};
  for (std::size_t b = 0; b < chain.n_obs_actions(); ++b) {
    const double v = mu_pre.dot(u_jump(U_post, chain.observation_cost.col(b), b, chain));
    if (v < best.value) best = {v, b};
  }
  return best;
}

ExactDpResult exact_dp(const FiniteChain& chain, std::size_t max_vectors) {
  chain.validate();
  const TimeGrid grid = chain_grid(chain);
  const std::size_t N = grid.n_nodes();
  const std::size_t A = chain.n_actions(), B = chain.n_obs_actions(), O = chain.n_symbols();

  // pre[k]: vectors valid just before anything happens at node k.
  // post[k]: at observation nodes, vectors valid right after the observation.
  std::vector<AlphaSet> pre(N), post(N);
  pre[N - 1] = {AlphaVec{chain.terminal_cost, -1, {}}};

  for (std::size_t k = N - 1; k-- > 0;) {
    const double h = grid.step(k);
    AlphaSet slab;
    slab.reserve(A * pre[k + 1].size());
    for (std::size_t i = 0; i < pre[k + 1].size(); ++i)
      for (std::size_t a = 0; a < A; ++a)
        slab.push_back({backward_U_step(pre[k + 1][i].U, a, h, chain), static_cast<int>(a), {i}});
    slab = prune(std::move(slab));
    if (slab.size() > max_vectors) throw SizeError("exact_dp: vector budget exceeded");

    if (!grid.is_obs(k)) {
      pre[k] = std::move(slab);
      continue;
    }
    post[k] = std::move(slab);
    const std::size_t P = post[k].size();
    double combos = static_cast<double>(B);
    for (std::size_t o = 0; o < O; ++o) combos *= static_cast<double>(P);
    if (combos > static_cast<double>(max_vectors) * 16.0)
      throw SizeError("exact_dp: observation cross product exceeds budget");
    AlphaSet jump;
    std::vector<std::size_t> idx(O, 0);
    std::vector<Vector> Up(O);
    for (std::size_t b = 0; b < B; ++b) {
      std::fill(idx.begin(), idx.end(), 0);
      while (true) {
        for (std::size_t o = 0; o < O; ++o) Up[o] = post[k][idx[o]].U;
        jump.push_back({u_jump(Up, chain.observation_cost.col(b), b, chain), static_cast<int>(b), idx});
        std::size_t o = 0;
        while (o < O && ++idx[o] == P) idx[o++] = 0;
        if (o == O) break;
      }
    }
    pre[k] = prune(std::move(jump));
    if (pre[k].size() > max_vectors) throw SizeError("exact_dp: vector budget exceeded");
  }

  ExactDpResult res;
  res.times = grid.times();
  const Vector& mu0 = chain.initial_belief;
  const std::size_t root = argmin_pair(pre[0], mu0);
  res.V0 = pair(pre[0][root].U, mu0);

  // Forward extraction along the realised symbol branches.
  struct Pending {
    int node;
    std::size_t entry;
  };
  auto& tree = res.tree;
  tree.push_back({});
  tree[0].grid_node = 0;
  tree[0].mu = mu0;
  std::vector<Pending> stack{{0, root}};
  std::vector<std::size_t> entry{root};
  while (!stack.empty()) {
    const Pending cur = stack.back();
    stack.pop_back();
    const std::size_t k = tree[cur.node].grid_node;
    const bool is_post = tree[cur.node].post;
    const AlphaSet& set = is_post ? post[k] : pre[k];
    entry.resize(tree.size());
    entry[static_cast<std::size_t>(cur.node)] = cur.entry;
    const AlphaVec& e = set[cur.entry];
    tree[cur.node].U = e.U;
    tree[cur.node].action = e.action;
    if (k == N - 1) continue;
    if (grid.is_obs(k) && !is_post) {
      const std::size_t b = static_cast<std::size_t>(e.action);
      for (std::size_t o = 0; o < O; ++o) {
        const double L = chain.emissions[b].col(o).dot(tree[cur.node].mu);
        if (!(L > 0.0)) continue;
        PolicyTreeNode child;
        child.grid_node = k;
        child.post = true;
        child.symbol = static_cast<int>(o);
        child.parent = cur.node;
        child.mu = bayes_jump(tree[cur.node].mu, o, b, chain).posterior;
        tree.push_back(std::move(child));
        const int id = static_cast<int>(tree.size()) - 1;
        tree[cur.node].children.push_back(id);
        stack.push_back({id, e.succ[o]});
      }
    } else {
      PolicyTreeNode child;
      child.grid_node = k + 1;
      child.parent = cur.node;
      child.mu = forward_belief_step(tree[cur.node].mu, static_cast<std::size_t>(e.action), grid.step(k), chain);
      tree.push_back(std::move(child));
      const int id = static_cast<int>(tree.size()) - 1;
      tree[cur.node].children.push_back(id);
      stack.push_back({id, e.succ[0]});
    }
  }

  // Belief-side cost-to-go and the adjoint, leaves first. Children always
  // carry larger ids than their parent.
  for (std::size_t id = tree.size(); id-- > 0;) {
    PolicyTreeNode& nd = tree[id];
    const std::size_t k = nd.grid_node;
    if (k == N - 1) {
      nd.V = pair(chain.terminal_cost, nd.mu);
      nd.lambda = chain.terminal_cost;
      continue;
    }
    if (grid.is_obs(k) && !nd.post) {
      const std::size_t b = static_cast<std::size_t>(nd.action);
      const AlphaVec& e = pre[k][entry[id]];
      nd.U_post.assign(O, Vector());
      for (std::size_t o = 0; o < O; ++o) nd.U_post[o] = post[k][e.succ[o]].U;
      std::vector<Vector> lam = nd.U_post;
      nd.V = pair(chain.observation_cost.col(b), nd.mu);
      for (int c : nd.children) {
        const PolicyTreeNode& ch = tree[static_cast<std::size_t>(c)];
        const double L = chain.emissions[b].col(static_cast<std::size_t>(ch.symbol)).dot(nd.mu);
        nd.V += L * ch.V;
        lam[static_cast<std::size_t>(ch.symbol)] = ch.lambda;
      }
      nd.lambda = lambda_jump(lam, chain.observation_cost.col(b), b, nd.mu, chain);
      nd.lambda_post = std::move(lam);
    } else {
      const std::size_t a = static_cast<std::size_t>(nd.action);
      const PolicyTreeNode& ch = tree[static_cast<std::size_t>(nd.children.at(0))];
      const double h = grid.step(k);
      nd.V = h * pair(chain.running_cost.col(a), nd.mu) + ch.V;
      nd.lambda = backward_U_step(ch.lambda, a, h, chain);
    }
  }
  return res;
}

double enumerate_value(const FiniteChain& chain, std::size_t max_paths) {
  chain.validate();
  if (chain.obs_times.size() != 1) throw DomainError("enumerate_value: exactly one observation time required");
  const TimeGrid grid = chain_grid(chain);
  const std::size_t N = grid.n_nodes();
  const std::size_t kobs = grid.obs_node(0);
  const std::size_t A = chain.n_actions(), B = chain.n_obs_actions(), O = chain.n_symbols();
  const std::size_t n_pre = kobs, n_post = N - 1 - kobs;
  auto count = [&](std::size_t steps) {
    double c = 1.0;
    for (std::size_t i = 0; i < steps; ++i) c *= static_cast<double>(A);
    return c;
  };
  if (count(n_pre) > static_cast<double>(max_paths) || count(n_post) > static_cast<double>(max_paths))
    throw SizeError("enumerate_value: path budget exceeded");
  const std::size_t P_pre = static_cast<std::size_t>(count(n_pre));
  const std::size_t P_post = static_cast<std::size_t>(count(n_post));

  // Cost of an open-loop action path from node k0 over `steps` steps.
  auto run = [&](Vector mu, std::size_t code, std::size_t k0, std::size_t steps, double& cost) {
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t a = code % A;
      code /= A;
      const double h = grid.step(k0 + s);
      cost += h * chain.running_cost.col(a).dot(mu);
      mu = mu + h * (chain.rate_matrices[a].transpose() * mu);
    }
    return mu;
  };

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < P_pre; ++p) {
    double pre_cost = 0.0;
    const Vector mu_obs = run(chain.initial_belief, p, 0, n_pre, pre_cost);
    for (std::size_t b = 0; b < B; ++b) {
      double total = pre_cost + chain.observation_cost.col(b).dot(mu_obs);
      for (std::size_t o = 0; o < O; ++o) {
        const Vector w = chain.emissions[b].col(o).cwiseProduct(mu_obs);
        const double L = w.sum();
        if (L == 0.0) continue;
        const Vector mu_post = w / L;
        double branch = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < P_post; ++q) {
          double c = 0.0;
          const Vector muT = run(mu_post, q, kobs, n_post, c);
          branch = std::min(branch, c + chain.terminal_cost.dot(muT));
        }
        total += L * branch;
      }
      best = std::min(best, total);
    }
  }
  return best;
}

FullyObservedValue fully_observed_dp(const FiniteChain& chain) {
  chain.validate();
  const TimeGrid grid = chain_grid(chain);
  const std::size_t N = grid.n_nodes(), S = chain.n_states;
  FullyObservedValue fo;
  fo.pre.assign(N, Vector());
  fo.post.assign(N, Vector());
  fo.pre[N - 1] = chain.terminal_cost;
  for (std::size_t k = N - 1; k-- > 0;) {
    const double h = grid.step(k);
    Vector U = Vector::Constant(S, std::numeric_limits<double>::infinity());
    for (std::size_t a = 0; a < chain.n_actions(); ++a)
      U = U.cwiseMin(backward_U_step(fo.pre[k + 1], a, h, chain));
    if (grid.is_obs(k)) {
      fo.post[k] = U;
      // The state is known, so the symbol carries no information.
      Vector cmin = chain.observation_cost.rowwise().minCoeff();
      fo.pre[k] = U + cmin;
    } else {
      fo.pre[k] = U;
    }
  }
  return fo;
}

OracleDiagnostics check_invariants(const FiniteChain& chain, const ExactDpResult& dp,
                                   bool run_enumerator) {
  const TimeGrid grid = chain_grid(chain);
  const FullyObservedValue fo = fully_observed_dp(chain);
  OracleDiagnostics d;
  d.V0 = dp.V0;
  d.tree_nodes = dp.tree.size();
  for (const PolicyTreeNode& nd : dp.tree) {
    d.envelope_max_err = std::max(d.envelope_max_err, std::abs(nd.V - pair(nd.U, nd.mu)));
    const std::size_t k = nd.grid_node;
    const Vector& Ufo = (grid.is_obs(k) && nd.post) ? fo.post[k] : fo.pre[k];
    d.fo_bound_max_violation = std::max(d.fo_bound_max_violation, (Ufo - nd.U).maxCoeff());
    if (k + 1 == grid.n_nodes()) continue;
    if (grid.is_obs(k) && !nd.post) {
      ++d.observation_nodes;
      const std::size_t b = static_cast<std::size_t>(nd.action);
      d.pairing_max_err = std::max(
          d.pairing_max_err, std::abs(pair(nd.lambda, nd.mu) - pair(chain.observation_cost.col(b), nd.mu)));
      const std::size_t bu = hamiltonian_discrete(nd.mu, nd.U_post, chain).action;
      const std::size_t bl = hamiltonian_discrete(nd.mu, nd.lambda_post, chain).action;
      if (bu != b || bl != b) ++d.argmin_disagreements;
    } else {
      const PolicyTreeNode& ch = dp.tree[static_cast<std::size_t>(nd.children.at(0))];
      const HamiltonianMin hm = hamiltonian_continuous(nd.mu, ch.U, chain);
      const double chosen = nd.mu.dot(chain.running_cost.col(static_cast<std::size_t>(nd.action)) +
                                      chain.rate_matrices[static_cast<std::size_t>(nd.action)] * ch.U);
      d.hamiltonian_argmin_mismatch = std::max(d.hamiltonian_argmin_mismatch, chosen - hm.value);
    }
  }
  if (run_enumerator) d.enumeration_err = std::abs(enumerate_value(chain) - dp.V0);
  return d;
}

std::pair<double, double> particle_controller_cost(const FiniteChain& chain, std::size_t M_eval,
                                                   std::size_t n_particles, std::uint64_t seed) {
  chain.validate();
  const TimeGrid grid = chain_grid(chain);
  const std::size_t N = grid.n_nodes(), S = chain.n_states;
  const FullyObservedValue fo = fully_observed_dp(chain);
  auto sample = [](const Vector& p, double u) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p(i);
      if (u < acc) return static_cast<std::size_t>(i);
    }
    return static_cast<std::size_t>(p.size() - 1);
  };
  std::vector<double> costs(M_eval);
  for (std::size_t m = 0; m < M_eval; ++m) {
    RngStream state_rng(seed, m, 0), obs_rng(seed, m, 1), filt_rng(seed, m, 2);
    std::size_t s = sample(chain.initial_belief, state_rng.uniform());
    std::vector<std::size_t> parts(n_particles);
    for (auto& p : parts) p = sample(chain.initial_belief, filt_rng.uniform());
    Vector w = Vector::Constant(static_cast<Eigen::Index>(n_particles), 1.0 / static_cast<double>(n_particles));
    double cost = 0.0;
    auto belief = [&] {
      Vector mu = Vector::Zero(static_cast<Eigen::Index>(S));
      for (std::size_t i = 0; i < n_particles; ++i) mu(static_cast<Eigen::Index>(parts[i])) += w(static_cast<Eigen::Index>(i));
      return mu;
    };
    for (std::size_t k = 0; k + 1 < N; ++k) {
      if (grid.is_obs(k)) {
        const Vector mu = belief();
        std::vector<Vector> Upost(chain.n_symbols(), fo.post[k]);
        const std::size_t b = hamiltonian_discrete(mu, Upost, chain).action;
        cost += chain.observation_cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(b));
        const Matrix& E = chain.emissions[b];
        const std::size_t o = sample(E.row(static_cast<Eigen::Index>(s)).transpose(), obs_rng.uniform());
        for (std::size_t i = 0; i < n_particles; ++i)
          w(static_cast<Eigen::Index>(i)) *= E(static_cast<Eigen::Index>(parts[i]), static_cast<Eigen::Index>(o));
        if (!(w.sum() > 0.0)) {
          for (auto& p : parts) p = sample(chain.initial_belief, filt_rng.uniform());
          w.setConstant(1.0);
        }
        w /= w.sum();
        if (1.0 / w.squaredNorm() < 0.5 * static_cast<double>(n_particles)) {
          const double u = filt_rng.uniform() / static_cast<double>(n_particles);
          const std::vector<std::size_t> counts = systematic_counts(w, u);
          std::vector<std::size_t> next;
          next.reserve(n_particles);
          for (std::size_t i = 0; i < n_particles; ++i) next.insert(next.end(), counts[i], parts[i]);
          parts = std::move(next);
          w.setConstant(1.0 / static_cast<double>(n_particles));
        }
      }
      const double h = grid.step(k);
      const std::size_t a = hamiltonian_continuous(belief(), fo.pre[k + 1], chain).action;
      cost += h * chain.running_cost(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
      const Matrix T = Matrix::Identity(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S)) +
                       h * chain.rate_matrices[a];
      s = sample(T.row(static_cast<Eigen::Index>(s)).transpose(), state_rng.uniform());
      for (auto& p : parts) p = sample(T.row(static_cast<Eigen::Index>(p)).transpose(), filt_rng.uniform());
    }
    cost += chain.terminal_cost(static_cast<Eigen::Index>(s));
    costs[m] = cost;
  }
  return {sample_mean(costs), ci95(costs)};
}

void write_policy_tree(std::ostream& out, const ExactDpResult& dp) {
  out << std::setprecision(17);
  out << "node,parent,grid_node,t,post,symbol,action,V";
  const std::size_t S = dp.tree.empty() ? 0 : static_cast<std::size_t>(dp.tree[0].mu.size());
  for (std::size_t s = 0; s < S; ++s) out << ",mu_" << s;
  for (std::size_t s = 0; s < S; ++s) out << ",U_" << s;
  for (std::size_t s = 0; s < S; ++s) out << ",lambda_" << s;
  out << '\n';
  for (std::size_t i = 0; i < dp.tree.size(); ++i) {
    const PolicyTreeNode& n = dp.tree[i];
    out << i << ',' << n.parent << ',' << n.grid_node << ',' << dp.times[n.grid_node] << ','
        << (n.post ? 1 : 0) << ',' << n.symbol << ',' << n.action << ',' << n.V;
    for (Eigen::Index s = 0; s < n.mu.size(); ++s) out << ',' << n.mu(s);
    for (Eigen::Index s = 0; s < n.U.size(); ++s) out << ',' << n.U(s);
    for (Eigen::Index s = 0; s < n.lambda.size(); ++s) out << ',' << n.lambda(s);
    out << '\n';
  }
}

}  // namespace posoc
