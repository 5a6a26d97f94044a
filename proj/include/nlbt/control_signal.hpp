#pragma once

#include <vector>

#include "nlbt/linalg.hpp"

namespace nlbt {

enum class ControlKind { Zero, PiecewiseConstant, Sinusoid, ExponentialDecay };

const char* to_string(ControlKind kind);

/// Deterministic control u : [0, T] -> R^m.
///
///  - piecewise constant: column k of `values` holds u on [kT/steps, (k+1)T/steps)
///  - sinusoid:           u_i(t) = a_i sin(w_i t)
///  - exponential decay:  u_i(t) = a_i exp(-r_i t)
class ControlSignal {
 public:
  ControlSignal() = default;

  static ControlSignal zero(int channels, double horizon);
  static ControlSignal piecewise_constant(MatrixXd values, double horizon);
  static ControlSignal sinusoid(VectorXd amplitudes, VectorXd frequencies, double horizon);
  static ControlSignal exponential_decay(VectorXd amplitudes, VectorXd rates, double horizon);

  ControlKind kind() const { return kind_; }
  int channels() const { return channels_; }
  double horizon() const { return horizon_; }
  const MatrixXd& values() const { return values_; }
  const VectorXd& amplitudes() const { return amplitudes_; }
  const VectorXd& rates() const { return rates_; }

  VectorXd operator()(double t) const;
  void evaluate(double t, Eigen::Ref<VectorXd> out) const;

  /// Copy with channel i zeroed wherever keep[i] is false.
  ControlSignal masked(const std::vector<bool>& keep) const;

  /// ∫_a^b u(t)^T W u(t) dt. Closed form for every kind (piecewise constant
  /// integrates exactly over its segments).
  double energy(const MatrixXd& weight, double a, double b) const;
  /// ∫_a^b ||u(t)||^2 dt
  double energy(double a, double b) const;
  /// ||u||^2 over [0, T]
  double energy() const { return energy(0.0, horizon_); }

  bool operator==(const ControlSignal&) const = default;

 private:
  ControlKind kind_ = ControlKind::Zero;
  int channels_ = 0;
  double horizon_ = 0.0;
  MatrixXd values_;
  VectorXd amplitudes_;
  VectorXd rates_;  // frequencies or decay rates
};

}  // namespace nlbt
