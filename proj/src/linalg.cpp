#include "nlbt/linalg.hpp"

#include <Eigen/Eigenvalues>

#include "nlbt/errors.hpp"

namespace nlbt {

double spectral_norm(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return svd.singularValues()(0);
}

double min_eigenvalue(const MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(symmetric), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

double max_eigenvalue(const MatrixXd& symmetric) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(symmetric), Eigen::EigenvaluesOnly);
  return es.eigenvalues()(es.eigenvalues().size() - 1);
}

MatrixXd psd_sqrt(const MatrixXd& a, const std::string& what, double clamp_tol) {
  if (a.rows() != a.cols()) throw DimensionError(what + ": matrix is not square");
  if (a.size() == 0) return a;
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, a.cwiseAbs().maxCoeff())) {
    throw DefinitenessError(what + ": matrix is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(a));
  VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < -clamp_tol) {
      throw DefinitenessError(what + ": not positive semidefinite (eigenvalue " +
                              std::to_string(ev(i)) + ")");
    }
    ev(i) = ev(i) < 0.0 ? 0.0 : std::sqrt(ev(i));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

bool is_positive_definite(const MatrixXd& a) {
  if (a.rows() != a.cols() || a.size() == 0) return false;
  Eigen::LLT<MatrixXd> llt(symmetrize(a));
  return llt.info() == Eigen::Success;
}

QuadraticForm::QuadraticForm(const MatrixXd& x, const std::string& what) : x_(symmetrize(x)) {
  if (x.rows() != x.cols()) throw DimensionError(what + ": matrix is not square");
  Eigen::LLT<MatrixXd> llt(x_);
  if (llt.info() == Eigen::Success) {
    r_ = llt.matrixL();
    pd_ = true;
  } else {
    r_ = psd_sqrt(x_, what, 1e-12 * std::max(1.0, x_.cwiseAbs().maxCoeff()));
    pd_ = false;
  }
}

MatrixXd spd_inverse(const MatrixXd& a, const std::string& what) {
  Eigen::LLT<MatrixXd> llt(symmetrize(a));
  if (a.rows() != a.cols() || llt.info() != Eigen::Success) {
    throw DefinitenessError(what + ": not positive definite");
  }
  MatrixXd inv = llt.solve(MatrixXd::Identity(a.rows(), a.cols()));
  return symmetrize(inv);
}

}  // namespace nlbt
