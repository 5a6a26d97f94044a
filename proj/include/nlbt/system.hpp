#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nlbt/coefficient_field.hpp"
#include "nlbt/control_signal.hpp"
#include "nlbt/linalg.hpp"

namespace nlbt {

struct SystemDims {
  int n = 0;  // state
  int m = 0;  // input
  int p = 0;  // output
  int q = 0;  // noise channels
  bool operator==(const SystemDims&) const = default;
};

/// Raw coefficients of
///   dx = [f(x) + B u + G(x) u] dt + [Γ(x) + M(u)] dw,   y = h(x) + E u,
/// with G(x) = [g_1(x) ... g_m(x)], Γ(x) = [γ_1(x) ... γ_q(x)],
/// M(u) = [M_1 u ... M_q u] and E[w(t) w(t)^T] = K t.
struct SystemCoefficients {
  CoefficientField f;
  MatrixXd B;
  std::vector<CoefficientField> G;
  std::vector<CoefficientField> Gamma;
  std::vector<MatrixXd> M;
  CoefficientField h;
  MatrixXd E;
  MatrixXd K;
};

enum class IssueKind { Dimension, Origin, Covariance };

struct ValidationIssue {
  IssueKind kind;
  std::string coefficient;
  std::string message;
};

struct SymmetryRecord {
  std::string coefficient;
  Symmetry status = Symmetry::Unknown;  // catalog decision
  bool sampled = false;                 // decided by sampling instead
  double max_defect = 0.0;              // max ||F(-x) + F(x)|| over samples
  bool symmetric = false;
};

struct ValidationReport {
  bool dimensions_ok = true;
  bool origin_ok = true;
  bool covariance_ok = true;
  double k_min_eigenvalue = 0.0;
  std::vector<SymmetryRecord> symmetry;  // f, g_1..g_m, γ_1..γ_q
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
  /// f, every g_i and every γ_j are point symmetric.
  bool point_symmetric() const;
  /// "exact" when decided from the catalog, "sampled" otherwise.
  std::string symmetry_method() const;
  /// Throws the exception matching the first issue.
  void throw_if_failed() const;
};

inline constexpr int kSymmetrySamples = 200;
inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kCovarianceClamp = 1e-12;

/// Dimension consistency, zero-at-origin, K ⪰ 0 and point symmetry.
ValidationReport validate_system(const SystemCoefficients& c, std::uint64_t seed = 0x5eedULL);

/// Immutable, validated system. Construction throws on any validation issue.
class StochasticSystem {
 public:
  explicit StochasticSystem(SystemCoefficients c);

  const SystemDims& dims() const { return dims_; }
  int n() const { return dims_.n; }
  int m() const { return dims_.m; }
  int p() const { return dims_.p; }
  int q() const { return dims_.q; }

  const CoefficientField& f() const { return c_.f; }
  const MatrixXd& B() const { return c_.B; }
  const std::vector<CoefficientField>& G() const { return c_.G; }
  const std::vector<CoefficientField>& Gamma() const { return c_.Gamma; }
  const std::vector<MatrixXd>& M() const { return c_.M; }
  const CoefficientField& h() const { return c_.h; }
  const MatrixXd& E() const { return c_.E; }
  const MatrixXd& K() const { return c_.K; }
  /// Symmetric root with K_sqrt K_sqrt^T = K.
  const MatrixXd& K_sqrt() const { return k_sqrt_; }

  /// mask[i] is true iff g_i is not identically zero.
  const std::vector<bool>& multiplicative_mask() const { return mask_; }
  bool has_multiplicative_control() const;
  bool M_is_zero() const;

  const SystemCoefficients& coefficients() const { return c_; }
  const ValidationReport& validation() const { return report_; }

  /// G(x) as an n x m matrix and Γ(x) as an n x q matrix.
  MatrixXd eval_G(const VectorXd& x) const;
  MatrixXd eval_Gamma(const VectorXd& x) const;

 private:
  SystemCoefficients c_;
  SystemDims dims_;
  MatrixXd k_sqrt_;
  std::vector<bool> mask_;
  ValidationReport report_;
};

/// ũ: channel i zeroed iff g_i ≡ 0.
ControlSignal multiplicative_control(const StochasticSystem& sys, const ControlSignal& u);

/// Matrices of a system whose coefficients are all exactly linear:
/// f(x) = A x, g_i(x) = Ng_i x, γ_j(x) = N_j x, h(x) = C x.
struct LinearSystemView {
  MatrixXd A;
  std::vector<MatrixXd> N;   // diffusion, one per noise channel
  std::vector<MatrixXd> Ng;  // multiplicative drift, one per input
  MatrixXd C;

  /// A^T X + X A + Σ_ij N_i^T X N_j k_ij + δ² Σ_i Ng_i^T X Ng_i, symmetrized.
  MatrixXd lyapunov_form(const MatrixXd& X, const MatrixXd& K, double delta) const;
  /// (N ++ Ng, blkdiag(K, δ² I)) so that lyapunov_form is a single generalized
  /// Lyapunov operator.
  std::pair<std::vector<MatrixXd>, MatrixXd> augmented_noise(const MatrixXd& K, double delta) const;
};

/// Catalog passthrough; never linearizes numerically.
std::optional<LinearSystemView> linearize_catalog(const StochasticSystem& sys);

}  // namespace nlbt
