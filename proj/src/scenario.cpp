#include "posoc/scenario.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace posoc {

namespace {

using nlohmann::json;

struct Reader {
  const json& j;
  std::string path;

  bool has(const char* key) const { return j.contains(key); }

  const json& at(const char* key) const {
    if (!j.contains(key)) throw ConfigError(path + ": missing field '" + key + "'");
    return j.at(key);
  }

  Reader sub(const char* key) const { return {at(key), path + "." + key}; }

  std::string where(const char* key) const { return path + "." + key; }

  template <class T>
  T get(const char* key) const {
    try {
      return at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  template <class T>
  T get_or(const char* key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  std::size_t count(const char* key, std::size_t fallback, std::size_t min) const {
    if (!has(key)) return fallback;
    const json& v = at(key);
    if (!v.is_number_unsigned() || v.get<std::uint64_t>() < min) {
      throw ConfigError(where(key) + ": expected an integer >= " + std::to_string(min));
    }
    return v.get<std::size_t>();
  }

  double positive(const char* key, double fallback) const {
    const double v = get_or(key, fallback);
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(where(key) + ": must be positive");
    return v;
  }

  double non_negative(const char* key, double fallback) const {
    const double v = get_or(key, fallback);
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(where(key) + ": must be non-negative");
    return v;
  }
};

template <class F>
void with_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Nested rows, or a number meaning that multiple of the n x n identity.
Matrix read_matrix(const json& v, Eigen::Index n, const std::string& where) {
  if (v.is_number()) return v.get<double>() * Matrix::Identity(n, n);
  if (!v.is_array() || v.empty() || !v[0].is_array()) {
    throw ConfigError(where + ": expected a number or an array of rows");
  }
  const auto rows = static_cast<Eigen::Index>(v.size());
  const auto cols = static_cast<Eigen::Index>(v[0].size());
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const json& r = v[static_cast<std::size_t>(i)];
    if (!r.is_array() || static_cast<Eigen::Index>(r.size()) != cols) {
      throw ConfigError(where + "[" + std::to_string(i) + "]: ragged row");
    }
    for (Eigen::Index k = 0; k < cols; ++k) {
      const json& e = r[static_cast<std::size_t>(k)];
      if (!e.is_number()) {
        throw ConfigError(where + "[" + std::to_string(i) + "][" + std::to_string(k) + "]: not a number");
      }
      m(i, k) = e.get<double>();
    }
  }
  return m;
}

/// Array of numbers, or a number broadcast to n entries.
Vector read_vector(const json& v, Eigen::Index n, const std::string& where) {
  if (v.is_number()) return Vector::Constant(n, v.get<double>());
  if (!v.is_array()) throw ConfigError(where + ": expected a number or an array");
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(where + "[" + std::to_string(i) + "]: not a number");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

/// Number -> one scalar vector; array of numbers -> one scalar vector each;
/// array of arrays -> vectors.
std::vector<Vector> read_vector_list(const json& v, const std::string& where) {
  if (v.is_number()) return {Vector::Constant(1, v.get<double>())};
  if (!v.is_array()) throw ConfigError(where + ": expected a number or an array");
  std::vector<Vector> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    if (v[i].is_number()) {
      out.push_back(Vector::Constant(1, v[i].get<double>()));
    } else {
      out.push_back(read_vector(v[i], 0, w));
    }
  }
  return out;
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const std::vector<Vector>& vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(to_json(v));
  return a;
}

PolicyMode parse_mode(const std::string& s, const std::string& where) {
  if (s == "closed_form") return PolicyMode::closed_form_lqg;
  if (s == "grid_search") return PolicyMode::grid_search;
  throw ConfigError(where + ": unknown alpha mode '" + s + "'");
}

std::vector<Vector> read_alpha_grid(const Reader& r, std::size_t dim_alpha) {
  const json& g = r.at("alpha_grid");
  if (g.is_object()) {
    // {"min": a, "max": b, "count": n} on every axis; only practical for small d_alpha.
    const Reader gr{g, r.where("alpha_grid")};
    const double lo = gr.get<double>("min"), hi = gr.get<double>("max");
    const auto n = gr.count("count", 0, 2);
    if (n < 2 || !(hi > lo)) throw ConfigError(gr.path + ": need count >= 2 and max > min");
    if (dim_alpha != 1) throw ConfigError(gr.path + ": range grids need a scalar control");
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(Vector::Constant(1, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1)));
    }
    return out;
  }
  return read_vector_list(g, r.where("alpha_grid"));
}

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> Scenario::schedule(std::size_t n_obs) const {
  if (!obs_times.empty()) {
    if (n_obs != obs_times.size()) {
      throw ConfigError("scenario " + id + " fixes " + std::to_string(obs_times.size()) +
                        " observation times");
    }
    return obs_times;
  }
  return uniform_obs_times(n_obs, horizon);
}

std::vector<double> Scenario::schedule() const {
  if (!obs_times.empty()) return obs_times;
  if (n_obs_list.empty()) throw ConfigError("scenario " + id + " has no observation schedule");
  return uniform_obs_times(n_obs_list.front(), horizon);
}

ControlProblem Scenario::problem(const std::vector<double>& times) const {
  ControlProblem p = lqg ? make_lqg_problem(*lqg, times, horizon)
                         : make_obstacle_problem(*obstacle, times, horizon);
  if (alpha_bound > 0.0) {
    const auto d = static_cast<Eigen::Index>(p.dim_alpha);
    p.alpha_set = {Vector::Constant(d, -alpha_bound), Vector::Constant(d, alpha_bound)};
  }
  return p;
}

ControlProblem Scenario::problem_with_beta(const std::vector<double>& times,
                                           const Vector& beta) const {
  ControlProblem p = problem(times);
  if (beta.size() != static_cast<Eigen::Index>(p.dim_beta)) {
    throw ConfigError("baseline beta has the wrong dimension");
  }
  p.beta_set = {beta};
  return p;
}

json Scenario::resolved() const {
  json j;
  j["id"] = id;
  j["kind"] = kind;
  j["horizon"] = horizon;
  if (lqg) {
    const LqgSpec& s = *lqg;
    json l;
    l["A"] = to_json(s.A);
    l["B"] = to_json(s.B);
    l["C"] = to_json(s.C);
    l["sigma"] = to_json(s.sigma);
    l["Q"] = to_json(s.Q);
    l["Q_T"] = to_json(s.Q_T);
    l["R"] = to_json(s.R);
    l["m0"] = to_json(s.m0);
    l["Sigma0"] = to_json(s.Sigma0);
    l["kappa"] = to_json(s.kappa);
    if (s.fixed_eps) l["fixed_eps"] = *s.fixed_eps;
    l["beta_grid"] = to_json(s.beta_grid);
    j["lqg"] = std::move(l);
  }
  if (obstacle) {
    const ObstacleSpec& s = *obstacle;
    json o;
    o["t_min"] = s.t_min;
    o["t_max"] = s.t_max;
    o["r_in"] = s.r_in;
    o["r_out"] = s.r_out;
    o["magnitude"] = s.magnitude;
    o["x_star"] = to_json(s.x_star);
    o["Q"] = to_json(s.Q);
    o["Q_T"] = to_json(s.Q_T);
    o["R"] = to_json(s.R);
    o["sigma"] = to_json(s.sigma);
    o["C"] = to_json(s.C);
    o["eps"] = s.eps;
    o["m0"] = to_json(s.m0);
    o["Sigma0"] = to_json(s.Sigma0);
    j["obstacle"] = std::move(o);
  }
  j["obs_times"] = obs_times;
  j["n_obs"] = n_obs_list;
  j["baseline_betas"] = baseline_betas;
  j["alpha_bound"] = alpha_bound;
  json t;
  t["M_train"] = train.M_train;
  t["dt"] = train.dt;
  t["window_K"] = train.window_K;
  t["degree"] = train.degree;
  t["include_cross"] = train.include_cross;
  t["basis"] = to_string(train.basis);
  t["policy_degree"] = train.policy_degree;
  t["ridge"] = train.ridge;
  t["n_outer"] = train.n_outer;
  t["tol"] = train.tol;
  t["seed"] = train.seed;
  t["alpha_mode"] = train.mode == PolicyMode::closed_form_lqg ? "closed_form" : "grid_search";
  t["alpha_grid"] = to_json(train.alpha_grid);
  t["n_y_samples"] = train.n_y_samples;
  t["resample_noise"] = train.resample_noise;
  if (train.init_seed) t["init_seed"] = *train.init_seed;
  t["init_scale"] = train.init_scale;
  j["training"] = std::move(t);
  j["evaluation"] = {{"M_eval", M_eval}, {"seed", eval_seed}, {"dt", eval_dt}};
  j["riccati_dt"] = riccati_dt;
  j["n_dump"] = n_dump;
  return j;
}

std::string Scenario::config_hash() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(resolved().dump());
  return os.str();
}

void Scenario::set_seed(std::uint64_t seed) {
  train.seed = seed;
  eval_seed = derive_stream(seed, 1);
}

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario parse error at byte ") + std::to_string(e.byte) + ": " +
                      e.what());
  }
  if (!j.is_object()) throw ConfigError("scenario: top level must be an object");
  const Reader r{j, "scenario"};
  Scenario s;
  s.id = r.get<std::string>("id");
  s.kind = r.get<std::string>("kind");
  s.horizon = r.positive("horizon", 1.0);
  const auto n = static_cast<Eigen::Index>(r.count("dim_x", 1, 1));

  std::size_t dim_alpha = static_cast<std::size_t>(n);
  if (s.kind == "lqg") {
    const Reader l = r.sub("lqg");
    LqgSpec spec;
    spec.A = read_matrix(l.at("A"), n, l.where("A"));
    spec.B = read_matrix(l.at("B"), n, l.where("B"));
    spec.C = read_matrix(l.at("C"), n, l.where("C"));
    spec.sigma = read_matrix(l.at("sigma"), n, l.where("sigma"));
    spec.Q = read_matrix(l.at("Q"), n, l.where("Q"));
    spec.Q_T = read_matrix(l.at("Q_T"), n, l.where("Q_T"));
    spec.R = read_matrix(l.at("R"), static_cast<Eigen::Index>(spec.B.cols()), l.where("R"));
    spec.m0 = read_vector(l.at("m0"), n, l.where("m0"));
    spec.Sigma0 = read_matrix(l.at("Sigma0"), n, l.where("Sigma0"));
    if (l.has("kappa")) spec.kappa = read_vector_list(l.at("kappa"), l.where("kappa"));
    if (l.has("fixed_eps")) spec.fixed_eps = l.get<double>("fixed_eps");
    if (l.has("beta_grid")) spec.beta_grid = read_vector_list(l.at("beta_grid"), l.where("beta_grid"));
    with_path(l.path, [&] { spec.validate(); });
    dim_alpha = static_cast<std::size_t>(spec.B.cols());
    s.lqg = std::move(spec);
  } else if (s.kind == "obstacle") {
    const Reader o = r.sub("obstacle");
    ObstacleSpec spec;
    spec.t_min = o.get_or("t_min", spec.t_min);
    spec.t_max = o.get_or("t_max", spec.t_max);
    spec.r_in = o.get_or("r_in", spec.r_in);
    spec.r_out = o.get_or("r_out", spec.r_out);
    spec.magnitude = o.get_or("magnitude", spec.magnitude);
    spec.x_star = read_vector(o.at("x_star"), n, o.where("x_star"));
    spec.Q = read_matrix(o.at("Q"), n, o.where("Q"));
    spec.Q_T = read_matrix(o.at("Q_T"), n, o.where("Q_T"));
    spec.R = read_matrix(o.at("R"), n, o.where("R"));
    spec.sigma = read_matrix(o.at("sigma"), n, o.where("sigma"));
    spec.C = read_matrix(o.at("C"), n, o.where("C"));
    spec.eps = o.get<double>("eps");
    spec.m0 = read_vector(o.at("m0"), n, o.where("m0"));
    spec.Sigma0 = read_matrix(o.at("Sigma0"), n, o.where("Sigma0"));
    with_path(o.path, [&] { spec.validate(s.horizon); });
    s.obstacle = std::move(spec);
  } else {
    throw ConfigError("scenario.kind: expected \"lqg\" or \"obstacle\", got \"" + s.kind + "\"");
  }

  if (r.has("obs_times")) s.obs_times = r.get<std::vector<double>>("obs_times");
  if (r.has("n_obs")) {
    const json& v = r.at("n_obs");
    if (v.is_array()) {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const json one = {{"n_obs", v[i]}};
        s.n_obs_list.push_back(Reader{one, r.where("n_obs") + "[" + std::to_string(i) + "]"}.count("n_obs", 0, 0));
      }
    } else {
      s.n_obs_list = {r.count("n_obs", 0, 0)};
    }
  } else if (!s.obs_times.empty()) {
    s.n_obs_list = {s.obs_times.size()};
  }
  if (r.has("baseline_betas")) s.baseline_betas = r.get<std::vector<double>>("baseline_betas");
  s.alpha_bound = r.get_or("alpha_bound", 0.0);
  if (!(s.alpha_bound >= 0.0)) throw ConfigError("scenario.alpha_bound: must be non-negative");

  if (r.has("training")) {
    const Reader t = r.sub("training");
    TrainConfig& c = s.train;
    c.M_train = t.count("M_train", c.M_train, 2);
    c.dt = t.positive("dt", c.dt);
    c.window_K = t.count("window_K", r.count("window_K", c.window_K, 1), 1);
    c.degree = t.count("degree", c.degree, 0);
    c.include_cross = t.get_or("include_cross", c.include_cross);
    if (t.has("basis")) {
      try {
        c.basis = parse_basis_kind(t.get<std::string>("basis"));
      } catch (const ConfigError& e) {
        throw ConfigError(t.where("basis") + ": " + e.what());
      }
    }
    c.policy_degree = t.count("policy_degree", c.policy_degree, 0);
    c.ridge = t.non_negative("ridge", c.ridge);
    c.n_outer = t.count("n_outer", c.n_outer, 1);
    c.tol = t.non_negative("tol", c.tol);
    c.seed = t.count("seed", c.seed, 0);
    c.mode = parse_mode(t.get_or<std::string>("alpha_mode", "closed_form"), t.where("alpha_mode"));
    if (t.has("alpha_grid")) c.alpha_grid = read_alpha_grid(t, dim_alpha);
    c.n_y_samples = t.count("n_y_samples", c.n_y_samples, 1);
    c.resample_noise = t.get_or("resample_noise", c.resample_noise);
    if (t.has("init_seed")) c.init_seed = t.count("init_seed", 0, 0);
    c.init_scale = t.non_negative("init_scale", c.init_scale);
  }
  if (r.has("evaluation")) {
    const Reader e = r.sub("evaluation");
    s.M_eval = e.count("M_eval", s.M_eval, 2);
    s.eval_seed = e.count("seed", s.eval_seed, 0);
    s.eval_dt = e.positive("dt", s.train.dt);
  } else {
    s.eval_dt = s.train.dt;
  }
  s.riccati_dt = r.positive("riccati_dt", s.riccati_dt);
  s.n_dump = r.count("n_dump", s.n_dump, 0);

  if (s.train.mode == PolicyMode::grid_search && s.train.alpha_grid.empty()) {
    throw ConfigError("scenario.training.alpha_grid: required for grid_search");
  }
  // Build once so structural errors surface at load time.
  if (!s.obs_times.empty() || !s.n_obs_list.empty()) (void)s.problem(s.schedule());
  return s;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace posoc
