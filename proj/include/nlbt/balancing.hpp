#pragma once

#include <string>

#include "nlbt/gramians.hpp"
#include "nlbt/linalg.hpp"
#include "nlbt/system.hpp"

namespace nlbt {

/// S P S^T = S^{-T} Q S^{-1} = diag(Sigma) with Sigma non-increasing.
struct BalancedRealization {
  MatrixXd S;
  MatrixXd S_inv;
  VectorXd Sigma;
  StochasticSystem balanced_system;
  /// Identifies this realization; copied into every truncation.
  std::string hash;
};

/// Square-root balancing: P = L L^T, L^T Q L = V Σ² V^T, S = Σ^{1/2} V^T L^{-1}.
/// Repeated eigenvalues are ordered deterministically (sign convention first
/// nonzero component positive, then lexicographically descending vectors).
/// Throws DefinitenessError when P is not SPD or Q is numerically singular.
BalancedRealization balance(const StochasticSystem& sys, const MatrixXd& P, const MatrixXd& Q);
inline BalancedRealization balance(const StochasticSystem& sys, const GramianPair& gp) {
  return balance(sys, gp.P, gp.Q);
}

struct ReducedSystem {
  int r = 0;
  StochasticSystem system;
  VectorXd Sigma1;
  VectorXd Sigma2;
  std::string parent_hash;
};

/// Keeps the leading r balanced states (x_2 ≡ 0). Checks the reduced fields
/// against the zero-padded parent on 20 sampled states.
ReducedSystem truncate(const BalancedRealization& bal, int r);

struct OrderPolicy {
  enum class Kind { Tolerance, Fixed, Energy };
  Kind kind = Kind::Fixed;
  double value = 0.0;  // τ or energy fraction
  int r = 1;

  static OrderPolicy tolerance(double tau) { return {Kind::Tolerance, tau, 0}; }
  static OrderPolicy fixed(int order) { return {Kind::Fixed, 0.0, order}; }
  static OrderPolicy energy(double fraction) { return {Kind::Energy, fraction, 0}; }
};

/// Tolerance: smallest r with 2 Σ_{k>r} σ_k ≤ τ. Energy: smallest r with
/// Σ_{k≤r} σ_k² ≥ fraction · Σ σ_k².
int select_order(const VectorXd& Sigma, const OrderPolicy& policy);

/// Σ_{k>r} σ_k
double hsv_tail(const VectorXd& Sigma, int r);

}  // namespace nlbt
