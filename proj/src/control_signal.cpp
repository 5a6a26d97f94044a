#include "nlbt/control_signal.hpp"

#include <algorithm>
#include <cmath>

#include "nlbt/errors.hpp"

namespace nlbt {

const char* to_string(ControlKind kind) {
  switch (kind) {
    case ControlKind::Zero: return "zero";
    case ControlKind::PiecewiseConstant: return "piecewise_constant";
    case ControlKind::Sinusoid: return "sinusoid";
    case ControlKind::ExponentialDecay: return "exponential_decay";
  }
  return "?";
}

namespace {

void check_horizon(double horizon) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw UsageError("control signal: horizon must be positive and finite");
  }
}

// ∫_a^b cos(w t) dt
double cos_integral(double w, double a, double b) {
  if (std::abs(w) < 1e-14) return b - a;
  return (std::sin(w * b) - std::sin(w * a)) / w;
}

// ∫_a^b exp(-s t) dt
double exp_integral(double s, double a, double b) {
  if (std::abs(s) < 1e-14) return b - a;
  return (std::exp(-s * a) - std::exp(-s * b)) / s;
}

}  // namespace

ControlSignal ControlSignal::zero(int channels, double horizon) {
  check_horizon(horizon);
  ControlSignal u;
  u.kind_ = ControlKind::Zero;
  u.channels_ = channels;
  u.horizon_ = horizon;
  return u;
}

ControlSignal ControlSignal::piecewise_constant(MatrixXd values, double horizon) {
  check_horizon(horizon);
  if (values.cols() == 0) throw UsageError("piecewise constant control: no segments");
  if (!values.allFinite()) throw UsageError("piecewise constant control: non-finite value");
  ControlSignal u;
  u.kind_ = ControlKind::PiecewiseConstant;
  u.channels_ = static_cast<int>(values.rows());
  u.horizon_ = horizon;
  u.values_ = std::move(values);
  return u;
}

ControlSignal ControlSignal::sinusoid(VectorXd amplitudes, VectorXd frequencies, double horizon) {
  check_horizon(horizon);
  if (amplitudes.size() != frequencies.size()) {
    throw DimensionError("sinusoid control: amplitudes and frequencies differ in length");
  }
  ControlSignal u;
  u.kind_ = ControlKind::Sinusoid;
  u.channels_ = static_cast<int>(amplitudes.size());
  u.horizon_ = horizon;
  u.amplitudes_ = std::move(amplitudes);
  u.rates_ = std::move(frequencies);
  return u;
}

ControlSignal ControlSignal::exponential_decay(VectorXd amplitudes, VectorXd rates, double horizon) {
  check_horizon(horizon);
  if (amplitudes.size() != rates.size()) {
    throw DimensionError("exponential control: amplitudes and rates differ in length");
  }
  ControlSignal u;
  u.kind_ = ControlKind::ExponentialDecay;
  u.channels_ = static_cast<int>(amplitudes.size());
  u.horizon_ = horizon;
  u.amplitudes_ = std::move(amplitudes);
  u.rates_ = std::move(rates);
  return u;
}

void ControlSignal::evaluate(double t, Eigen::Ref<VectorXd> out) const {
  switch (kind_) {
    case ControlKind::Zero:
      out.setZero();
      return;
    case ControlKind::PiecewiseConstant: {
      const Eigen::Index steps = values_.cols();
      auto k = static_cast<Eigen::Index>(std::floor(t / horizon_ * static_cast<double>(steps)));
      k = std::clamp<Eigen::Index>(k, 0, steps - 1);
      out = values_.col(k);
      return;
    }
    case ControlKind::Sinusoid:
      out = (amplitudes_.array() * (rates_.array() * t).sin()).matrix();
      return;
    case ControlKind::ExponentialDecay:
      out = (amplitudes_.array() * (-rates_.array() * t).exp()).matrix();
      return;
  }
}

VectorXd ControlSignal::operator()(double t) const {
  VectorXd out(channels_);
  evaluate(t, out);
  return out;
}

ControlSignal ControlSignal::masked(const std::vector<bool>& keep) const {
  if (static_cast<int>(keep.size()) != channels_) {
    throw DimensionError("control mask: expected " + std::to_string(channels_) + " channels, got " +
                         std::to_string(keep.size()));
  }
  ControlSignal u = *this;
  for (int i = 0; i < channels_; ++i) {
    if (keep[static_cast<std::size_t>(i)]) continue;
    switch (kind_) {
      case ControlKind::Zero: break;
      case ControlKind::PiecewiseConstant: u.values_.row(i).setZero(); break;
      case ControlKind::Sinusoid:
      case ControlKind::ExponentialDecay: u.amplitudes_(i) = 0.0; break;
    }
  }
  return u;
}

double ControlSignal::energy(const MatrixXd& weight, double a, double b) const {
  if (weight.rows() != channels_ || weight.cols() != channels_) {
    throw DimensionError("control energy: weight must be " + std::to_string(channels_) + "x" +
                         std::to_string(channels_));
  }
  if (b < a) throw UsageError("control energy: reversed interval");
  a = std::max(a, 0.0);
  b = std::min(b, horizon_);
  if (b <= a) return 0.0;
  switch (kind_) {
    case ControlKind::Zero:
      return 0.0;
    case ControlKind::PiecewiseConstant: {
      const Eigen::Index steps = values_.cols();
      const double h = horizon_ / static_cast<double>(steps);
      double acc = 0.0;
      for (Eigen::Index k = 0; k < steps; ++k) {
        const double lo = std::max(a, static_cast<double>(k) * h);
        const double hi = std::min(b, static_cast<double>(k + 1) * h);
        if (hi <= lo) continue;
        const VectorXd v = values_.col(k);
        acc += v.dot(weight * v) * (hi - lo);
      }
      return acc;
    }
    case ControlKind::Sinusoid: {
      // sin(w_i t) sin(w_j t) = (cos((w_i - w_j) t) - cos((w_i + w_j) t)) / 2
      double acc = 0.0;
      for (int i = 0; i < channels_; ++i) {
        for (int j = 0; j < channels_; ++j) {
          const double c = weight(i, j) * amplitudes_(i) * amplitudes_(j);
          if (c == 0.0) continue;
          acc += c * 0.5 *
                 (cos_integral(rates_(i) - rates_(j), a, b) - cos_integral(rates_(i) + rates_(j), a, b));
        }
      }
      return acc;
    }
    case ControlKind::ExponentialDecay: {
      double acc = 0.0;
      for (int i = 0; i < channels_; ++i) {
        for (int j = 0; j < channels_; ++j) {
          const double c = weight(i, j) * amplitudes_(i) * amplitudes_(j);
          if (c == 0.0) continue;
          acc += c * exp_integral(rates_(i) + rates_(j), a, b);
        }
      }
      return acc;
    }
  }
  return 0.0;
}

double ControlSignal::energy(double a, double b) const {
  return energy(MatrixXd::Identity(channels_, channels_), a, b);
}

}  // namespace nlbt
