#pragma once

#include <random>
#include <vector>

#include "nlbt/system.hpp"

namespace nlbt::testing {

inline MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

/// dx = (a x + b u) dt + (nx + mu) dw, y = c x; q = m = 1.
inline StochasticSystem scalar_linear(double a, double b, double c, double n = 0.0, double m = 0.0,
                                      double k = 1.0) {
  SystemCoefficients s;
  s.f = CoefficientField::linear(scalar(a));
  s.B = scalar(b);
  s.G = {CoefficientField::zero(1, 1)};
  s.Gamma = {n == 0.0 ? CoefficientField::zero(1, 1) : CoefficientField::linear(scalar(n))};
  s.M = {scalar(m)};
  s.h = CoefficientField::linear(scalar(c));
  s.E = scalar(0.0);
  s.K = scalar(k);
  return StochasticSystem(std::move(s));
}

inline MatrixXd random_matrix(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  MatrixXd a(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int k = 0; k < cols; ++k) a(i, k) = nd(rng);
  return a;
}

/// Eigenvalues drawn from [lo, hi] in a random orthonormal basis.
inline MatrixXd random_spd(std::mt19937_64& rng, int n, double lo = 0.5, double hi = 3.0) {
  std::uniform_real_distribution<double> ud(lo, hi);
  Eigen::HouseholderQR<MatrixXd> qr(random_matrix(rng, n, n));
  const MatrixXd U = qr.householderQ();
  VectorXd d(n);
  for (int i = 0; i < n; ++i) d(i) = ud(rng);
  return 0.5 * (U * d.asDiagonal() * U.transpose() + (U * d.asDiagonal() * U.transpose()).transpose());
}

/// A − (spectral abscissa bound) so that A + A^T ≺ −I.
inline MatrixXd random_stable(std::mt19937_64& rng, int n) {
  MatrixXd R = random_matrix(rng, n, n, 0.5);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(R + R.transpose());
  return R - (0.5 * es.eigenvalues().maxCoeff() + 1.0) * MatrixXd::Identity(n, n);
}

struct RandomLinear {
  StochasticSystem sys;
  MatrixXd A;
  std::vector<MatrixXd> N;
  std::vector<MatrixXd> Ng;
  MatrixXd C;
};

/// Catalog-linear system with small noise and multiplicative terms, mean-square
/// stable by a wide margin.
inline RandomLinear random_linear(std::mt19937_64& rng, int n, int m, int q, int p) {
  MatrixXd A = random_stable(rng, n);
  std::vector<MatrixXd> N, Ng;
  for (int j = 0; j < q; ++j) N.push_back(random_matrix(rng, n, n, 0.15));
  for (int i = 0; i < m; ++i) Ng.push_back(random_matrix(rng, n, n, 0.15));
  MatrixXd C = random_matrix(rng, p, n);
  SystemCoefficients c;
  c.f = CoefficientField::linear(A);
  c.B = random_matrix(rng, n, m);
  for (const auto& g : Ng) c.G.push_back(CoefficientField::linear(g));
  for (const auto& g : N) c.Gamma.push_back(CoefficientField::linear(g));
  c.M.assign(static_cast<std::size_t>(q), MatrixXd::Zero(n, m));
  c.h = CoefficientField::linear(C);
  c.E = MatrixXd::Zero(p, m);
  const MatrixXd L = random_matrix(rng, q, q, 0.5);
  c.K = L * L.transpose() + 0.5 * MatrixXd::Identity(q, q);
  return RandomLinear{StochasticSystem(std::move(c)), std::move(A), std::move(N), std::move(Ng), std::move(C)};
}

}  // namespace nlbt::testing
