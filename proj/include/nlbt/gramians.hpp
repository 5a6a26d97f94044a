#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nlbt/linalg.hpp"
#include "nlbt/lyapunov.hpp"
#include "nlbt/system.hpp"

namespace nlbt {

inline constexpr int kMaxLyapunovDim = 500;
/// Dense Kronecker solve up to this dimension; Schur-based iteration above.
inline constexpr int kKroneckerDim = 40;

/// Solver for A^T Y + Y A + Σ_ij k_ij N_i^T Y N_j = −RHS.
///
/// Small problems are vectorized and LU-factored once. Larger ones solve the
/// plain Lyapunov part by complex Schur decomposition and iterate on the
/// noise term, which converges exactly when the operator is mean-square
/// stable.
class GeneralizedLyapunovSolver {
 public:
  GeneralizedLyapunovSolver(MatrixXd A, std::vector<MatrixXd> N, MatrixXd K);

  /// Throws InstabilityError when the operator is singular or the iteration
  /// diverges.
  MatrixXd solve(const MatrixXd& rhs) const;
  /// A^T Y + Y A + Σ k_ij N_i^T Y N_j
  MatrixXd apply(const MatrixXd& Y) const;
  /// The solution for RHS = I is positive definite.
  bool mean_square_stable() const;
  int dim() const { return static_cast<int>(a_.rows()); }

 private:
  struct Impl;
  MatrixXd a_;
  std::vector<MatrixXd> n_;
  MatrixXd k_;
  std::shared_ptr<const Impl> impl_;
};

MatrixXd solve_generalized_lyapunov(const MatrixXd& A, const std::vector<MatrixXd>& N, const MatrixXd& K,
                                    const MatrixXd& rhs);

enum class GramianMode { Full, Simplified };
const char* to_string(GramianMode mode);

struct LipschitzData {
  double lambda = 0.0;
  std::string lambda_source;  // "exact-linear", "analytic-chain" or "sampled"
  double lambda_sampled = 0.0;  // sampled infimum, always reported
  std::pair<VectorXd, VectorXd> argmin;
  double c_gamma = 0.0;
  std::string c_gamma_source;
  double c_h = 0.0;
  std::string c_h_source;
  double c_B = 0.0;
  double c_M = 0.0;
  double c_min = 0.0;
  double mu_max = 0.0;
  GramianMode mode = GramianMode::Full;
};

/// One-sided Lipschitz rate λ with LV_X ≤ −λ V_X(x−y), and the constants of
/// the ε-construction. Throws LipschitzFailure when λ ≤ 0.
LipschitzData estimate_lipschitz_data(const StochasticSystem& sys, const QuadraticCertificate& cert,
                                      const SamplingPlan& plan, GramianMode mode = GramianMode::Full);

/// Upper cap on ε when the corresponding constants vanish.
inline constexpr double kEpsilonCap = 1e6;
inline constexpr int kMaxHalvings = 60;
inline constexpr int kMaxLinearScalings = 200;

struct GramianPair {
  MatrixXd P;
  MatrixXd Q;
  std::string provenance;  // "linear-exact", "epsilon-construction", "user-supplied"
  GramianMode mode = GramianMode::Full;
  QuadraticCertificate cert;
  std::optional<LipschitzData> lip;
  double eps_P = 0.0;
  double eps_Q = 0.0;
  int halvings_P = 0;
  int halvings_Q = 0;
  int scalings_P = 0;
  CertifyReport reach_report;
  CertifyReport obs_report;
};

/// P = (ε_P X)^{-1}, Q = X / ε_Q with the largest closed-form ε values,
/// halved until both inequalities certify.
GramianPair epsilon_gramians(const StochasticSystem& sys, const QuadraticCertificate& cert, const LipschitzData& lip,
                             const SamplingPlan& plan);

/// Exact generalized Lyapunov solutions for catalog-linear systems. Falls
/// back to the ε-construction when M is nonzero, when the dual solution is
/// singular, or when 200 rescalings of P do not certify.
GramianPair linear_gramians(const LinearSystemView& view, const StochasticSystem& sys,
                            const QuadraticCertificate& cert, const SamplingPlan& plan);

/// Certifies user-provided Gramians; throws CertificationError on failure.
GramianPair user_gramians(const StochasticSystem& sys, const QuadraticCertificate& cert, MatrixXd P, MatrixXd Q,
                          const SamplingPlan& plan, GramianMode mode = GramianMode::Full);

/// linear_gramians for catalog-linear systems, otherwise estimate + ε.
GramianPair compute_gramians(const StochasticSystem& sys, const QuadraticCertificate& cert, const SamplingPlan& plan,
                             GramianMode mode = GramianMode::Full);

}  // namespace nlbt
