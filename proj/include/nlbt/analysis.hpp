#pragma once

#include <string>
#include <vector>

#include "nlbt/balancing.hpp"
#include "nlbt/control_signal.hpp"
#include "nlbt/gramians.hpp"
#include "nlbt/lyapunov.hpp"
#include "nlbt/simulation.hpp"
#include "nlbt/system.hpp"

namespace nlbt {

struct BoundReport {
  int r = 0;
  double hsv_tail = 0.0;        // Σ_{k>r} σ_k
  double control_energy = 0.0;  // ‖𝒰^{1/2} u‖_{L²_T}
  double tilde_energy = 0.0;    // ‖ũ‖²_{L²_T}
  double delta = 1.0;
  double bound_value = 0.0;     // 2 tail · control_energy · exp(0.5 tilde / δ²)
  bool applicable = true;       // false when point symmetry is missing
  bool has_mc = false;
  Estimate mc_error;            // ‖y − y_r‖_{L²_T}
  bool satisfied = false;       // mc ≤ bound + 4 SE + roundoff floor
  std::string note;
};

/// Closed-form error bound on [a, b] (default: the control horizon).
/// Throws SymmetryRequired unless f, G and Γ are point symmetric, and
/// UsageError for r outside 1..n.
BoundReport compute_bound(const VectorXd& Sigma, int r, const ControlSignal& u, const StochasticSystem& sys,
                          const QuadraticCertificate& cert);
BoundReport compute_bound(const VectorXd& Sigma, int r, const ControlSignal& u, const StochasticSystem& sys,
                          const QuadraticCertificate& cert, double a, double b);

/// Reduced-system Gramian check: diag(Σ1) as both Gramians of the truncation.
struct ReducedGramianCheck {
  int r = 0;
  CertifyReport reach;
  CertifyReport obs;
  bool pass = false;
};

inline constexpr double kReducedGramianTolerance = 1e-8;
/// Relative to ‖y‖_{L²_T}; absorbs roundoff from the balancing transformation.
inline constexpr double kRoundoffFloor = 1e-10;

ReducedGramianCheck check_reduced_gramians(const ReducedSystem& red, const QuadraticCertificate& cert,
                                           const SamplingPlan& plan);

struct ValidationOptions {
  SimOptions sim;
  SamplingPlan reduced_plan{};  // tolerance is overridden to 1e-8
  bool check_reduced = true;
};

struct ReductionValidation {
  VectorXd Sigma;
  std::string balanced_hash;
  bool applicable = true;
  std::string symmetry_note;
  std::vector<BoundReport> reports;
  std::vector<ReducedGramianCheck> reduced_checks;
  bool all_satisfied = true;
  bool monotone = true;
  std::vector<std::string> findings;
  std::vector<std::string> warnings;
};

/// Balances, truncates at each order, simulates full and reduced systems
/// from x0 = 0 with common random numbers and compares the measured error
/// against the bound. Violations are reported as findings, not thrown.
ReductionValidation validate_reduction(const StochasticSystem& sys, const GramianPair& gp, const ControlSignal& u,
                                       const SimGrid& grid, const std::vector<int>& orders,
                                       const ValidationOptions& opts = {});

/// True when f, some g_i or some γ_j contains a cubic term.
bool has_cubic_drift(const StochasticSystem& sys);

}  // namespace nlbt
