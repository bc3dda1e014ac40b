#include "posoc/regression.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "posoc/kernels.hpp"

namespace posoc {

using nlohmann::json;

FeatureBasis::FeatureBasis(std::size_t degree, std::size_t dim_x, std::size_t dim_z,
                           bool include_cross, BasisKind kind)
    : degree_(degree), dim_x_(dim_x), dim_z_(dim_z), include_cross_(include_cross), kind_(kind) {
  if (kind == BasisKind::invariant && dim_z != 0 && dim_z != dim_x) {
    throw ConfigError("invariant basis needs the window dimension to equal the state dimension");
  }
  const std::size_t d = n_vars();
  const bool inv = kind == BasisKind::invariant;
  auto on_x = [&](std::size_t v) { return inv ? v < 2 : v < dim_x; };
  auto on_z = [&](std::size_t v) { return inv ? v > 0 : v >= dim_x; };
  std::map<std::vector<std::size_t>, std::size_t> index;
  std::vector<std::size_t> cur;
  std::function<void(std::size_t, std::size_t)> gen = [&](std::size_t start, std::size_t left) {
    if (left == 0) {
      bool has_x = false, has_z = false;
      for (auto v : cur) {
        has_x = has_x || on_x(v);
        has_z = has_z || on_z(v);
      }
      if (include_cross || !(has_x && has_z)) {
        index[cur] = monomials_.size();
        monomials_.push_back(cur);
      }
      return;
    }
    for (std::size_t v = start; v < d; ++v) {
      cur.push_back(v);
      gen(v, left - 1);
      cur.pop_back();
    }
  };
  for (std::size_t deg = 0; deg <= degree; ++deg) gen(0, deg);

  parent_.assign(monomials_.size(), 0);
  last_var_.assign(monomials_.size(), 0);
  for (std::size_t m = 1; m < monomials_.size(); ++m) {
    auto t = monomials_[m];
    last_var_[m] = t.back();
    t.pop_back();
    parent_[m] = index.at(t);
  }
  for (std::size_t m = 1; m < monomials_.size(); ++m) {
    const auto& t = monomials_[m];
    for (std::size_t p = 0; p < t.size(); ++p) {
      if (!on_x(t[p]) || (p > 0 && t[p] == t[p - 1])) continue;
      std::size_t e = 0;
      while (p + e < t.size() && t[p + e] == t[p]) ++e;
      auto lower = t;
      lower.erase(lower.begin() + static_cast<std::ptrdiff_t>(p));
      dx_.push_back({m, t[p], index.at(lower), static_cast<double>(e)});
    }
  }
  std::vector<std::vector<std::size_t>> by_m(monomials_.size());
  for (std::size_t q = 0; q < dx_.size(); ++q) by_m[dx_[q].m].push_back(q);
  for (const auto& d1 : dx_) {
    for (auto q : by_m[d1.lower]) {
      const auto& d2 = dx_[q];
      dxx_.push_back({d1.m, d1.var, d2.var, d2.lower, d1.mult * d2.mult});
    }
  }
}

std::size_t FeatureBasis::n_vars() const {
  if (kind_ == BasisKind::monomial) return dim_x_ + dim_z_;
  return dim_z_ == 0 ? 1 : 3;
}

void FeatureBasis::invariants(const double* u, double* s) const {
  const Eigen::Map<const Vector> x(u, static_cast<Eigen::Index>(dim_x_));
  s[0] = x.squaredNorm();
  if (dim_z_ == 0) return;
  const Eigen::Map<const Vector> z(u + dim_x_, static_cast<Eigen::Index>(dim_z_));
  s[1] = x.dot(z);
  s[2] = z.squaredNorm();
}

void FeatureBasis::eval(const double* u, double* out) const {
  double s[3];
  const double* v = u;
  if (kind_ == BasisKind::invariant) {
    invariants(u, s);
    v = s;
  }
  out[0] = 1.0;
  for (std::size_t m = 1; m < monomials_.size(); ++m) out[m] = out[parent_[m]] * v[last_var_[m]];
}

Vector FeatureBasis::eval(const Vector& u) const {
  if (static_cast<std::size_t>(u.size()) != input_dim()) {
    throw ConfigError("feature input has dimension " + std::to_string(u.size()) + ", basis expects " +
                      std::to_string(input_dim()));
  }
  Vector out(static_cast<Eigen::Index>(n_features()));
  eval(u.data(), out.data());
  return out;
}

void FeatureBasis::invariant_slopes(const Vector& theta, const double* phi, double* a) const {
  a[0] = a[1] = 0.0;
  for (const auto& d : dx_) a[d.var] += theta[static_cast<Eigen::Index>(d.m)] * d.mult * phi[d.lower];
}

void FeatureBasis::gradient_x(const Vector& theta, const double* u, const double* phi,
                              double* grad) const {
  if (kind_ == BasisKind::monomial) {
    std::fill(grad, grad + dim_x_, 0.0);
    for (const auto& d : dx_) grad[d.var] += theta[static_cast<Eigen::Index>(d.m)] * d.mult * phi[d.lower];
    return;
  }
  double a[2];
  invariant_slopes(theta, phi, a);
  for (std::size_t i = 0; i < dim_x_; ++i) {
    grad[i] = 2.0 * a[0] * u[i] + (dim_z_ > 0 ? a[1] * u[dim_x_ + i] : 0.0);
  }
}

Vector FeatureBasis::gradient_x(const Vector& theta, const Vector& u, const Vector& phi) const {
  Vector g(static_cast<Eigen::Index>(dim_x_));
  gradient_x(theta, u.data(), phi.data(), g.data());
  return g;
}

Matrix FeatureBasis::hessian_x(const Vector& theta, const Vector& u, const Vector& phi) const {
  const auto n = static_cast<Eigen::Index>(dim_x_);
  Matrix H = Matrix::Zero(n, n);
  if (kind_ == BasisKind::monomial) {
    for (const auto& d : dxx_) {
      H(static_cast<Eigen::Index>(d.i), static_cast<Eigen::Index>(d.j)) +=
          theta[static_cast<Eigen::Index>(d.m)] * d.mult * phi[static_cast<Eigen::Index>(d.lower)];
    }
    return H;
  }
  double a[2];
  invariant_slopes(theta, phi.data(), a);
  double b[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  for (const auto& d : dxx_) {
    b[d.i][d.j] += theta[static_cast<Eigen::Index>(d.m)] * d.mult * phi[static_cast<Eigen::Index>(d.lower)];
  }
  // ds0/dx = 2x, ds1/dx = z.
  Matrix V = Matrix::Zero(n, 2);
  V.col(0) = 2.0 * u.head(n);
  if (dim_z_ > 0) V.col(1) = u.segment(n, n);
  const Eigen::Matrix2d Bm{{b[0][0], b[0][1]}, {b[1][0], b[1][1]}};
  H = V * Bm * V.transpose();
  H.diagonal().array() += 2.0 * a[0];
  return H;
}

std::string to_string(BasisKind k) { return k == BasisKind::monomial ? "monomial" : "invariant"; }

BasisKind parse_basis_kind(const std::string& s) {
  if (s == "monomial") return BasisKind::monomial;
  if (s == "invariant") return BasisKind::invariant;
  throw ConfigError("basis kind: expected \"monomial\" or \"invariant\", got \"" + s + "\"");
}

Vector basis_input(const Vector& x, const WindowState& z) {
  Vector u(x.size() + static_cast<Eigen::Index>(z.capacity() * z.dim_y()));
  u.head(x.size()) = x;
  z.flatten_into(u.data() + x.size());
  return u;
}

Vector feature_map(const Vector& x, const WindowState& z, const FeatureBasis& basis) {
  const std::size_t dz = z.capacity() * z.dim_y();
  if (static_cast<std::size_t>(x.size()) != basis.dim_x() || dz != basis.dim_z()) {
    throw ConfigError("feature_map: (x, z) has dimension " + std::to_string(x.size() + dz) +
                      ", basis expects " + std::to_string(basis.input_dim()));
  }
  Vector u(static_cast<Eigen::Index>(basis.input_dim()));
  u.head(x.size()) = x;
  z.flatten_into(u.data() + x.size());
  return basis.eval(u);
}

LeastSquaresResult least_squares_fit(const Matrix& Phi, const Vector& P, double ridge) {
  if (Phi.rows() < 1) throw FitError("least squares needs at least one sample");
  if (Phi.rows() != P.size()) throw FitError("design and target sizes differ");
  if (ridge < 0.0) throw FitError("ridge must be nonnegative");
  LeastSquaresResult out;
  if (ridge > 0.0) {
    Matrix G = Phi.transpose() * Phi;
    G.diagonal().array() += ridge;
    out.theta = G.ldlt().solve(Phi.transpose() * P);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(Phi);
    out.theta = cod.solve(P);
    out.rank_deficient = cod.rank() < Phi.cols();
  }
  return out;
}

Matrix standardized_fit(const Matrix& Phi, const Matrix& Y, double ridge, Execution exec) {
  const Eigen::Index M = Phi.rows(), F = Phi.cols(), q = Y.cols();
  if (M < 1) throw FitError("regression needs at least one sample");
  const Eigen::RowVectorXd ybar = Y.colwise().mean();
  const Eigen::RowVectorXd mu = Phi.colwise().mean();
  std::vector<Eigen::Index> active;
  Vector sd(F);
  for (Eigen::Index j = 1; j < F; ++j) {
    const double s = std::sqrt((Phi.col(j).array() - mu[j]).square().sum() / static_cast<double>(M));
    sd[j] = s;
    if (s > 1e-12 * std::max(1.0, std::abs(mu[j]))) active.push_back(j);
  }
  Matrix theta = Matrix::Zero(F, q);
  const auto A = static_cast<Eigen::Index>(active.size());
  if (A > 0) {
    Matrix U(M, A);
    for (Eigen::Index a = 0; a < A; ++a) {
      const auto j = active[static_cast<std::size_t>(a)];
      U.col(a) = (Phi.col(j).array() - mu[j]) / sd[j];
    }
    const Matrix Yc = Y.rowwise() - ybar;
    Matrix C;
    if (ridge > 0.0) {
      Matrix G;
      Vector r0;
      gram(U, Yc.col(0), G, r0, exec);
      G.diagonal().array() += ridge;
      Matrix R(A, q);
      R.col(0) = r0;
      if (q > 1) R.rightCols(q - 1) = U.transpose() * Yc.rightCols(q - 1);
      C = G.ldlt().solve(R);
    } else {
      C = Eigen::CompleteOrthogonalDecomposition<Matrix>(U).solve(Yc);
    }
    for (Eigen::Index a = 0; a < A; ++a) {
      const auto j = active[static_cast<std::size_t>(a)];
      theta.row(j) = C.row(a) / sd[j];
    }
  }
  for (Eigen::Index c = 0; c < q; ++c) theta(0, c) = ybar[c] - mu.tail(F - 1).dot(theta.col(c).tail(F - 1));
  if (!theta.allFinite()) throw FitError("regression produced non-finite coefficients");
  return theta;
}

namespace {

Vector stacked(const Vector& x, const WindowState& z) {
  Vector u(x.size() + static_cast<Eigen::Index>(z.capacity() * z.dim_y()));
  u.head(x.size()) = x;
  z.flatten_into(u.data() + x.size());
  return u;
}

}  // namespace

double ValueAnsatz::value(std::size_t k, const Vector& x, const WindowState& z) const {
  return theta.at(k).dot(basis.eval(stacked(x, z)));
}

double ValueAnsatz::value_post(std::size_t n, const Vector& x, const WindowState& z) const {
  return theta_post.at(n).dot(basis.eval(stacked(x, z)));
}

Vector ValueAnsatz::gradient_x(std::size_t k, const Vector& x, const WindowState& z) const {
  const Vector u = stacked(x, z);
  return basis.gradient_x(theta.at(k), u, basis.eval(u));
}

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string ValueAnsatz::to_json() const {
  json j;
  j["format"] = "posoc-value-ansatz";
  j["version"] = kFormatVersion;
  j["basis"] = {{"degree", basis.degree()},
                {"dim_x", basis.dim_x()},
                {"dim_z", basis.dim_z()},
                {"include_cross", basis.include_cross()},
                {"kind", to_string(basis.kind())}};
  j["window_K"] = window_K;
  j["dim_y"] = dim_y;
  j["time_nodes"] = time_nodes;
  j["theta"] = json::array();
  for (const auto& t : theta) j["theta"].push_back(vec_json(t));
  j["theta_post"] = json::array();
  for (const auto& [n, t] : theta_post) j["theta_post"].push_back({{"obs", n}, {"theta", vec_json(t)}});
  return j.dump();
}

ValueAnsatz ValueAnsatz::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ansatz file: ") + e.what());
  }
  try {
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ConfigError("ansatz file: unsupported version " + j.at("version").dump());
    }
    ValueAnsatz a;
    const auto& b = j.at("basis");
    a.basis = FeatureBasis(b.at("degree").get<std::size_t>(), b.at("dim_x").get<std::size_t>(),
                           b.at("dim_z").get<std::size_t>(), b.at("include_cross").get<bool>(),
                           parse_basis_kind(b.value("kind", std::string("monomial"))));
    a.window_K = j.at("window_K").get<std::size_t>();
    a.dim_y = j.at("dim_y").get<std::size_t>();
    a.time_nodes = j.at("time_nodes").get<std::vector<double>>();
    for (const auto& t : j.at("theta")) a.theta.push_back(json_vec(t));
    for (const auto& t : j.at("theta_post")) {
      a.theta_post[t.at("obs").get<std::size_t>()] = json_vec(t.at("theta"));
    }
    for (const auto& t : a.theta) {
      if (static_cast<std::size_t>(t.size()) != a.basis.n_features()) {
        throw ConfigError("ansatz file: coefficient vector does not match the basis");
      }
    }
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("ansatz file: ") + e.what());
  }
}

void ValueAnsatz::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  f << to_json() << "\n";
}

ValueAnsatz ValueAnsatz::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

Matrix design_matrix(const FeatureBasis& basis, const Matrix& X, const Matrix& Z) {
  const Eigen::Index M = X.rows();
  const auto F = static_cast<Eigen::Index>(basis.n_features());
  Matrix Phi(M, F);
  Vector u(static_cast<Eigen::Index>(basis.input_dim())), phi(F);
  for (Eigen::Index m = 0; m < M; ++m) {
    u.head(X.cols()) = X.row(m).transpose();
    if (Z.cols() > 0) u.tail(Z.cols()) = Z.row(m).transpose();
    basis.eval(u.data(), phi.data());
    Phi.row(m) = phi.transpose();
  }
  return Phi;
}

ValueAnsatz fit_value_ansatz(const std::vector<NodeSamples>& samples, const FeatureBasis& basis,
                             double ridge, std::vector<double> time_nodes, std::size_t window_K,
                             std::size_t dim_y, Execution exec) {
  ValueAnsatz a;
  a.basis = basis;
  a.window_K = window_K;
  a.dim_y = dim_y;
  a.time_nodes = std::move(time_nodes);
  a.theta.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    if (samples[k].P.size() == 0) throw FitError("time node " + std::to_string(k) + " has no samples");
    const Matrix Phi = design_matrix(basis, samples[k].X, samples[k].Z);
    a.theta.push_back(standardized_fit(Phi, samples[k].P, ridge, exec).col(0));
  }
  return a;
}

}  // namespace posoc
