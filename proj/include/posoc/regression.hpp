#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "posoc/model.hpp"

namespace posoc {

enum class BasisKind {
  /// Monomials in u = (x, z).
  monomial,
  /// Monomials in the rotation invariants s = (|x|^2, x.z, |z|^2); needs
  /// dim_z == dim_x or dim_z == 0. `degree` counts powers of s.
  invariant
};

/// Monomials up to `degree`, graded-lex order, constant first.
/// With include_cross off, monomials mixing x and z variables are dropped.
class FeatureBasis {
 public:
  FeatureBasis() = default;
  FeatureBasis(std::size_t degree, std::size_t dim_x, std::size_t dim_z, bool include_cross = true,
               BasisKind kind = BasisKind::monomial);

  std::size_t degree() const { return degree_; }
  std::size_t dim_x() const { return dim_x_; }
  std::size_t dim_z() const { return dim_z_; }
  std::size_t input_dim() const { return dim_x_ + dim_z_; }
  bool include_cross() const { return include_cross_; }
  BasisKind kind() const { return kind_; }
  std::size_t n_features() const { return monomials_.size(); }
  /// Variable indices of monomial m, nondecreasing. For the invariant kind
  /// the variables are 0 = |x|^2, 1 = x.z, 2 = |z|^2.
  const std::vector<std::size_t>& monomial(std::size_t m) const { return monomials_[m]; }

  /// u has input_dim entries, out receives n_features entries.
  void eval(const double* u, double* out) const;
  Vector eval(const Vector& u) const;

  /// d/dx of theta' phi(u), given u and phi(u) from eval.
  void gradient_x(const Vector& theta, const double* u, const double* phi, double* grad) const;
  Vector gradient_x(const Vector& theta, const Vector& u, const Vector& phi) const;
  /// d^2/dx^2 of theta' phi(u).
  Matrix hessian_x(const Vector& theta, const Vector& u, const Vector& phi) const;

  bool operator==(const FeatureBasis& o) const {
    return degree_ == o.degree_ && dim_x_ == o.dim_x_ && dim_z_ == o.dim_z_ &&
           include_cross_ == o.include_cross_ && kind_ == o.kind_;
  }

 private:
  struct Derivative {
    std::size_t m, var, lower;
    double mult;
  };
  struct SecondDerivative {
    std::size_t m, i, j, lower;
    double mult;
  };

  std::size_t n_vars() const;
  void invariants(const double* u, double* s) const;
  /// Coefficients of d(theta'phi)/ds_j for the x-dependent invariants.
  void invariant_slopes(const Vector& theta, const double* phi, double* a) const;

  std::size_t degree_ = 0, dim_x_ = 0, dim_z_ = 0;
  bool include_cross_ = true;
  BasisKind kind_ = BasisKind::monomial;
  std::vector<std::vector<std::size_t>> monomials_;
  std::vector<std::size_t> parent_, last_var_;
  std::vector<Derivative> dx_;
  std::vector<SecondDerivative> dxx_;
};

std::string to_string(BasisKind k);
BasisKind parse_basis_kind(const std::string& s);

/// (x, flattened window) stacked.
Vector basis_input(const Vector& x, const WindowState& z);
/// Feature vector of (x, flattened window).
Vector feature_map(const Vector& x, const WindowState& z, const FeatureBasis& basis);

struct LeastSquaresResult {
  Vector theta;
  bool rank_deficient = false;
};

/// argmin |Phi theta - P|^2 + ridge |theta|^2. With ridge = 0 the minimum-norm
/// solution is returned and rank deficiency is flagged.
LeastSquaresResult least_squares_fit(const Matrix& Phi, const Vector& P, double ridge);

/// Ridge regression on standardised columns with an unpenalised intercept.
/// Column 0 of Phi must be the constant feature. Constant columns get a zero
/// coefficient. Y may hold several right-hand sides.
Matrix standardized_fit(const Matrix& Phi, const Matrix& Y, double ridge,
                        Execution exec = Execution::parallel);

/// Value ansatz over a time grid. theta[k] represents the value just before
/// anything happens at node k; at observation nodes theta_post[n] represents
/// the value right after observation n has entered the window.
struct ValueAnsatz {
  static constexpr int kFormatVersion = 1;

  FeatureBasis basis;
  std::size_t window_K = 1;
  std::size_t dim_y = 1;
  std::vector<double> time_nodes;
  std::vector<Vector> theta;
  std::map<std::size_t, Vector> theta_post;

  double value(std::size_t k, const Vector& x, const WindowState& z) const;
  double value_post(std::size_t n, const Vector& x, const WindowState& z) const;
  Vector gradient_x(std::size_t k, const Vector& x, const WindowState& z) const;

  std::string to_json() const;
  static ValueAnsatz from_json(const std::string& text);
  void save(const std::string& path) const;
  static ValueAnsatz load(const std::string& path);
};

struct NodeSamples {
  Matrix X;  // M x d_x
  Matrix Z;  // M x K d_y, zero padded windows
  Vector P;  // pathwise costs
};

/// Design matrix [phi(x_m, z_m)]_m.
Matrix design_matrix(const FeatureBasis& basis, const Matrix& X, const Matrix& Z);

/// One independent standardised ridge fit per node; `ridge` is the absolute
/// penalty in standardised coordinates.
ValueAnsatz fit_value_ansatz(const std::vector<NodeSamples>& samples, const FeatureBasis& basis,
                             double ridge, std::vector<double> time_nodes, std::size_t window_K,
                             std::size_t dim_y, Execution exec = Execution::parallel);

}  // namespace posoc
