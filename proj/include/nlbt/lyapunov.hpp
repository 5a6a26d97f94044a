#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nlbt/linalg.hpp"
#include "nlbt/system.hpp"

namespace nlbt {

/// Weight X ≻ 0, the G-term weight δ > 0 and the control weight 𝒰 ≻ 0.
struct QuadraticCertificate {
  MatrixXd X;
  double delta = 1.0;
  MatrixXd calU;

  static QuadraticCertificate identity(int n, int m, double delta = 1.0);
  /// Throws DimensionError / DefinitenessError / UsageError.
  void validate(int n, int m) const;
};

/// Cached evaluation of LV_X and S_X for a fixed weight X.
///
///   LV_X(x, y; δ) = 2⟨x−y, X(f(x)−f(y))⟩ + δ²‖X^{1/2}(G(x)−G(y))‖_F²
///                   + ‖X^{1/2}(Γ(x)−Γ(y))K^{1/2}‖_F²
///   S_X(x, y)     = B^T X(x−y) + Σ_ij M_i^T X(γ_j(x)−γ_j(y)) k_ij
class LyapunovOperator {
 public:
  LyapunovOperator(const StochasticSystem& sys, const MatrixXd& X, double delta);

  double LV(const VectorXd& x, const VectorXd& y) const;
  VectorXd S(const VectorXd& x, const VectorXd& y) const;
  const QuadraticForm& weight() const { return form_; }

 private:
  const StochasticSystem* sys_;
  QuadraticForm form_;
  double delta_;
};

double eval_LV(const StochasticSystem& sys, const QuadraticCertificate& cert, const VectorXd& x,
               const VectorXd& y);
/// 𝒰 − Σ_ij M_i^T X M_j k_ij, symmetrized.
MatrixXd eval_U(const StochasticSystem& sys, const QuadraticCertificate& cert, const MatrixXd& X);
VectorXd eval_S(const StochasticSystem& sys, const MatrixXd& X, const VectorXd& x, const VectorXd& y);

enum class Inequality { Reach, Obs, ReachSimplified, ObsSimplified };

const char* to_string(Inequality which);
Inequality inequality_from_string(const std::string& s);
inline bool is_simplified(Inequality w) {
  return w == Inequality::ReachSimplified || w == Inequality::ObsSimplified;
}
inline bool is_reach(Inequality w) { return w == Inequality::Reach || w == Inequality::ReachSimplified; }

/// Pointwise residual of a Gramian inequality for a fixed candidate.
/// Reach: LV_{P^{-1}} + S^T U^{-1} S. Obs: LV_Q + ‖h(x)−h(y)‖².
class ResidualEvaluator {
 public:
  ResidualEvaluator(const StochasticSystem& sys, const QuadraticCertificate& cert, const MatrixXd& candidate,
                    Inequality which);

  /// y is ignored for the simplified variants.
  double operator()(const VectorXd& x, const VectorXd& y) const;
  Inequality which() const { return which_; }
  /// P^{-1} for reach, Q for obs.
  const MatrixXd& weight() const { return op_.weight().matrix(); }
  /// U_{P^{-1}}^{-1}; empty for obs.
  const MatrixXd& U_inverse() const { return u_inv_; }

 private:
  const StochasticSystem* sys_;
  Inequality which_;
  LyapunovOperator op_;
  MatrixXd u_inv_;
};

double reachability_residual(const StochasticSystem& sys, const QuadraticCertificate& cert, const MatrixXd& P,
                             const VectorXd& x, const VectorXd& y);
double observability_residual(const StochasticSystem& sys, const QuadraticCertificate& cert, const MatrixXd& Q,
                              const VectorXd& x, const VectorXd& y);

inline constexpr double kCertifyTolerance = 1e-9;

/// Structured sample of state pairs. Roughly 70% are independent uniform
/// draws from balls whose radius cycles through `radii`, 15% lie on scaled
/// coordinate axes and 15% are symmetric pairs y = −x.
struct SamplingPlan {
  int pairs = 10000;
  std::vector<double> radii{0.1, 1.0, 10.0, 100.0};
  std::uint64_t seed = 20240611ULL;
  /// Sample even when an exact eigenvalue test is available.
  bool force_sampling = false;
  double tolerance = kCertifyTolerance;
};

/// The pairs are generated up front and depend only on (n, plan).
std::vector<std::pair<VectorXd, VectorXd>> sample_pairs(int n, const SamplingPlan& plan);

struct CertifyReport {
  Inequality which = Inequality::Reach;
  std::string method;  // "exact-linear" or "sampled"
  int n_samples = 0;
  double max_residual = 0.0;
  std::pair<VectorXd, VectorXd> argmax_pair;
  bool pass = false;
  double tolerance = kCertifyTolerance;
};

/// Certifies that `candidate` satisfies the chosen inequality. Catalog-linear
/// systems are decided by the largest eigenvalue of the residual matrix (the
/// arg-max pair is then the unit eigenvector and 0); all other systems are
/// sampled. Throws UsageError on an empty plan and CertificationError when
/// U_{P^{-1}} is not positive definite.
CertifyReport certify_inequality(const StochasticSystem& sys, const QuadraticCertificate& cert,
                                 const MatrixXd& candidate, Inequality which, const SamplingPlan& plan);

}  // namespace nlbt
