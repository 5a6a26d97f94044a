#pragma once

#include <Eigen/Dense>

#include <string>

namespace nlbt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd symmetrize(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

/// Largest singular value.
double spectral_norm(const MatrixXd& a);

double min_eigenvalue(const MatrixXd& symmetric);
double max_eigenvalue(const MatrixXd& symmetric);

/// Symmetric square root of a PSD matrix. Eigenvalues in [-clamp_tol, 0) are
/// treated as zero; anything more negative throws DefinitenessError naming
/// `what`.
MatrixXd psd_sqrt(const MatrixXd& a, const std::string& what, double clamp_tol = 1e-12);

/// True when Cholesky succeeds on the symmetrized input.
bool is_positive_definite(const MatrixXd& a);

/// A symmetric PSD weight X together with a factor R satisfying X = R R^T.
/// R is the lower Cholesky factor when X is positive definite, otherwise the
/// symmetric square root. Norms ||X^{1/2} A|| are computed as ||R^T A||.
class QuadraticForm {
 public:
  QuadraticForm() = default;
  QuadraticForm(const MatrixXd& x, const std::string& what);

  const MatrixXd& matrix() const { return x_; }
  const MatrixXd& factor() const { return r_; }
  bool positive_definite() const { return pd_; }
  int dim() const { return static_cast<int>(x_.rows()); }

  /// x^T X x
  double value(const VectorXd& v) const { return v.dot(x_ * v); }
  /// ||X^{1/2} A||_F^2
  double weighted_frobenius_sq(const MatrixXd& a) const {
    return (r_.transpose() * a).squaredNorm();
  }

 private:
  MatrixXd x_;
  MatrixXd r_;
  bool pd_ = false;
};

/// Inverse of an SPD matrix via Cholesky, symmetrized. Throws
/// DefinitenessError naming `what` on failure.
MatrixXd spd_inverse(const MatrixXd& a, const std::string& what);

}  // namespace nlbt
