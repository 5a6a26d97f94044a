#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nlbt/control_signal.hpp"
#include "nlbt/linalg.hpp"
#include "nlbt/system.hpp"

namespace nlbt {

struct SimGrid {
  double T = 1.0;
  int steps = 1000;
  int paths = 1000;
  std::uint64_t seed = 1;
  double t0 = 0.0;

  double dt() const { return T / steps; }
  /// Throws UsageError unless T > 0, steps ≥ 1 and paths ≥ 1.
  void validate() const;
};

struct SimOptions {
  /// Drift scaled by 1 / (1 + dt ‖f(x)‖).
  bool tamed = false;
  bool keep_trajectories = false;
  double explosion_threshold = 1e12;
  double max_flagged_fraction = 0.01;
  /// Paths are split into this many contiguous batches (fewer if paths is
  /// smaller); standard errors come from the batch means.
  int batches = 20;
  /// Optional n × k matrix; when set, E⟨x(t), p_k⟩² is recorded per column.
  MatrixXd directions;
};

/// Grid-point mean with standard error.
struct Series {
  VectorXd mean;
  VectorXd se;
};

struct Estimate {
  double value = 0.0;
  double se = 0.0;
};

struct SimulationResult {
  VectorXd t;
  Series output_mean_sq;       // E‖y(t)‖²
  Series state_second_moment;  // E‖x(t)‖²
  Estimate l2T_norm_sq;        // E ∫ ‖y‖² dt (trapezoidal)
  std::vector<Series> direction_energy;
  int paths = 0;
  int flagged = 0;
  int batches = 0;
  bool tamed = false;
  /// paths × (steps + 1) × n, row-major; only with keep_trajectories.
  std::vector<double> trajectories;
};

/// Worker threads used for path batches: NLBT_THREADS if set, otherwise the
/// hardware concurrency. Results do not depend on it.
int simulation_threads();

/// Euler–Maruyama with dW = K^{1/2} ξ √dt. Each path draws from its own
/// generator seeded by (seed, path index). Throws DivergenceError when more
/// than max_flagged_fraction of the paths exceed the explosion threshold.
SimulationResult simulate(const StochasticSystem& sys, const ControlSignal& u, const VectorXd& x0,
                          const SimGrid& grid, const SimOptions& opts = {});

struct PairedResult {
  Estimate error_sq;    // E ∫ ‖y_A − y_B‖² dt
  Estimate error_norm;  // its square root (delta-method standard error)
  Series diff_mean_sq;  // E‖y_A(t) − y_B(t)‖²
  Estimate l2T_A;       // E ∫ ‖y_A‖² dt
  int paths = 0;
  int flagged = 0;
};

/// Drives both systems with the same control and Wiener increments.
PairedResult simulate_coupled(const StochasticSystem& a, const StochasticSystem& b, const ControlSignal& u,
                              const VectorXd& x0a, const VectorXd& x0b, const SimGrid& grid,
                              const SimOptions& opts = {});

/// One reference system against several others in a single pass.
std::vector<PairedResult> simulate_coupled_many(const StochasticSystem& ref,
                                                const std::vector<const StochasticSystem*>& others,
                                                const ControlSignal& u, const VectorXd& x0_ref,
                                                const std::vector<VectorXd>& x0_others, const SimGrid& grid,
                                                const SimOptions& opts = {});

struct DecayFit {
  bool trivial = false;  // E‖x‖² ≡ 0
  bool decays = false;
  double decay_rate = 0.0;    // least-squares rate on [T/2, T]
  double fit_residual = 0.0;  // RMS residual of the log-linear fit
  double lambda_cert = 0.0;
  double k_hat = 0.0;         // fitted on [0, T/2]
  bool envelope_ok = false;   // E‖x‖² ≤ k̂ ‖x0‖² e^{−λ t} + 4 SE on [0, T]
  double worst_envelope_excess = 0.0;  // max (mean − envelope) / SE, or −inf
  std::string note;
  VectorXd t;
  Series second_moment;
};

/// Mean-square decay of the uncontrolled-input system (B = 0, M = 0).
DecayFit stability_probe(const StochasticSystem& sys, const VectorXd& x0, const SimGrid& grid, double lambda_cert,
                         const ControlSignal& u, const SimOptions& opts = {});

struct DirectionEnergy {
  VectorXd t;
  std::vector<Series> energy;  // E⟨x(t), p_k⟩²
  VectorXd sup;                // sup_t of the mean
  VectorXd sup_se;             // standard error at the arg-sup
  Series second_moment;
};

/// x0 = 0; directions must be orthonormal to 1e−12.
DirectionEnergy direction_energy(const StochasticSystem& sys, const ControlSignal& u, const SimGrid& grid,
                                 const MatrixXd& directions, const SimOptions& opts = {});

struct TruncationProbe {
  double t0 = 0.0;         // grid time actually used
  Estimate error;          // E ∫_{t0}^T ‖y − ŷ‖² dt
  Estimate coeff_sq;       // E⟨x(t0), q⟩²
  double exp_factor = 1.0; // exp(∫_{t0}^T ‖ũ‖² dt / δ²)
  double bound = 0.0;      // μ E⟨x(t0), q⟩² exp_factor
  Estimate slack;          // E[err − μ exp_factor ⟨x(t0), q⟩²] per path
  bool satisfied = false;  // slack ≤ 4 SE
};

/// Branches at t0: one copy continues, the other restarts from
/// x(t0) − ⟨x(t0), q⟩ q; both see the same increments afterwards.
TruncationProbe observability_truncation_probe(const StochasticSystem& sys, const ControlSignal& u,
                                               const SimGrid& grid, const VectorXd& q, double mu, double t0,
                                               double delta, const VectorXd& x0, const SimOptions& opts = {});

/// Binary dump: "NLBT", u32 version = 1, u32 n, u32 steps, u32 paths, then
/// doubles in [path][step][state] order.
void write_trajectories(const std::string& path, const SimulationResult& res, int n, int steps);

}  // namespace nlbt
