#include "nlbt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nlbt/errors.hpp"

namespace nlbt {

namespace {

std::string asymmetric_coefficients(const StochasticSystem& sys) {
  std::string out;
  for (const auto& rec : sys.validation().symmetry) {
    if (rec.symmetric) continue;
    if (!out.empty()) out += ", ";
    out += rec.coefficient;
  }
  return out;
}

bool contains_cube(const CoefficientField& f) {
  switch (f.kind()) {
    case FieldKind::CubicDrift:
    case FieldKind::Cube: return true;
    case FieldKind::Sum:
      return std::any_of(f.terms().begin(), f.terms().end(), contains_cube);
    case FieldKind::Projected: return contains_cube(f.inner());
    default: return false;
  }
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

bool has_cubic_drift(const StochasticSystem& sys) { return contains_cube(sys.f()); }

BoundReport compute_bound(const VectorXd& Sigma, int r, const ControlSignal& u, const StochasticSystem& sys,
                          const QuadraticCertificate& cert) {
  return compute_bound(Sigma, r, u, sys, cert, 0.0, u.horizon());
}

BoundReport compute_bound(const VectorXd& Sigma, int r, const ControlSignal& u, const StochasticSystem& sys,
                          const QuadraticCertificate& cert, double a, double b) {
  const int n = static_cast<int>(Sigma.size());
  if (r < 1 || r > n) throw UsageError("compute_bound: order r = " + std::to_string(r) + " outside 1.." + std::to_string(n));
  if (!sys.validation().point_symmetric()) {
    throw SymmetryRequired("error bound requires point-symmetric f, G and Gamma; not symmetric: " +
                           asymmetric_coefficients(sys));
  }
  if (u.channels() != sys.m()) throw DimensionError("compute_bound: control has the wrong number of channels");
  if (!(cert.delta > 0.0)) throw UsageError("compute_bound: delta must be positive");
  BoundReport rep;
  rep.r = r;
  rep.hsv_tail = hsv_tail(Sigma, r);
  rep.control_energy = std::sqrt(std::max(0.0, u.energy(cert.calU, a, b)));
  rep.tilde_energy = multiplicative_control(sys, u).energy(a, b);
  rep.delta = cert.delta;
  rep.bound_value = 2.0 * rep.hsv_tail * rep.control_energy *
                    std::exp(0.5 * rep.tilde_energy / (cert.delta * cert.delta));
  return rep;
}

ReducedGramianCheck check_reduced_gramians(const ReducedSystem& red, const QuadraticCertificate& cert,
                                           const SamplingPlan& plan) {
  SamplingPlan p = plan;
  p.tolerance = kReducedGramianTolerance;
  QuadraticCertificate rc;
  rc.X = MatrixXd::Identity(red.r, red.r);
  rc.delta = cert.delta;
  rc.calU = cert.calU;
  const MatrixXd G = red.Sigma1.asDiagonal();
  ReducedGramianCheck out;
  out.r = red.r;
  out.reach = certify_inequality(red.system, rc, G, Inequality::Reach, p);
  out.obs = certify_inequality(red.system, rc, G, Inequality::Obs, p);
  out.pass = out.reach.pass && out.obs.pass;
  return out;
}

ReductionValidation validate_reduction(const StochasticSystem& sys, const GramianPair& gp, const ControlSignal& u,
                                       const SimGrid& grid, const std::vector<int>& orders,
                                       const ValidationOptions& opts) {
  grid.validate();
  if (orders.empty()) throw UsageError("validate_reduction: no orders requested");
  for (int r : orders) {
    if (r < 1 || r > sys.n()) {
      throw UsageError("validate_reduction: order " + std::to_string(r) + " outside 1.." + std::to_string(sys.n()));
    }
  }
  if (u.channels() != sys.m()) throw DimensionError("validate_reduction: control has the wrong number of channels");

  ReductionValidation out;
  if (has_cubic_drift(sys) && grid.dt() > 1e-3) {
    out.warnings.push_back("dt = " + num(grid.dt()) + " exceeds 1e-3 for a cubic drift; the Euler-Maruyama error may dominate");
  }
  const BalancedRealization bal = balance(sys, gp);
  out.Sigma = bal.Sigma;
  out.balanced_hash = bal.hash;
  out.applicable = sys.validation().point_symmetric();
  if (!out.applicable) {
    out.symmetry_note = "bound not applicable: not point symmetric (" + asymmetric_coefficients(sys) + ")";
  }

  std::vector<ReducedSystem> reduced;
  reduced.reserve(orders.size());
  for (int r : orders) reduced.push_back(truncate(bal, r));

  if (opts.check_reduced) {
    for (const auto& red : reduced) {
      out.reduced_checks.push_back(check_reduced_gramians(red, gp.cert, opts.reduced_plan));
      const auto& c = out.reduced_checks.back();
      if (!c.pass) {
        out.findings.push_back("r = " + std::to_string(red.r) +
                               ": diag(Sigma1) fails the reduced Gramian check (reach max residual " +
                               num(c.reach.max_residual) + ", obs max residual " + num(c.obs.max_residual) + ")");
      }
    }
  }

  std::vector<const StochasticSystem*> others;
  std::vector<VectorXd> x0s;
  for (const auto& red : reduced) {
    others.push_back(&red.system);
    x0s.push_back(VectorXd::Zero(red.r));
  }
  const auto paired = simulate_coupled_many(sys, others, u, VectorXd::Zero(sys.n()), x0s, grid, opts.sim);
  const double a = grid.t0, b = grid.t0 + grid.T;

  for (std::size_t i = 0; i < orders.size(); ++i) {
    const int r = orders[i];
    BoundReport rep;
    if (out.applicable) {
      rep = compute_bound(bal.Sigma, r, u, sys, gp.cert, a, b);
    } else {
      rep.r = r;
      rep.hsv_tail = hsv_tail(bal.Sigma, r);
      rep.control_energy = std::sqrt(std::max(0.0, u.energy(gp.cert.calU, a, b)));
      rep.tilde_energy = multiplicative_control(sys, u).energy(a, b);
      rep.delta = gp.cert.delta;
      rep.bound_value = 0.0;
      rep.applicable = false;
      rep.note = out.symmetry_note;
    }
    rep.has_mc = true;
    rep.mc_error = paired[i].error_norm;
    const double se = std::isnan(rep.mc_error.se) ? 0.0 : rep.mc_error.se;
    // Coordinate changes alone leave roundoff of this size in the error.
    const double roundoff = kRoundoffFloor * std::sqrt(std::max(0.0, paired[i].l2T_A.value));
    if (rep.applicable) {
      rep.satisfied = rep.mc_error.value <= rep.bound_value + 4.0 * se + roundoff;
      if (r == sys.n()) rep.note = "identity truncation, floor-limited";
      if (!rep.satisfied) {
        out.all_satisfied = false;
        out.findings.push_back("r = " + std::to_string(r) + ": measured error " + num(rep.mc_error.value) +
                               " exceeds bound " + num(rep.bound_value) + " + 4 SE (" + num(se) +
                               "); rerun the Gramian certification with a denser sampling plan (certificate "
                               "may be invalid) and repeat with a smaller dt (discretization error)");
      }
    }
    out.reports.push_back(rep);
  }

  std::vector<const BoundReport*> sorted;
  for (const auto& rep : out.reports) sorted.push_back(&rep);
  std::sort(sorted.begin(), sorted.end(), [](auto x, auto y) { return x->r < y->r; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    const auto& lo = *sorted[i - 1];
    const auto& hi = *sorted[i];
    if (hi.r == lo.r) continue;
    const double s_lo = std::isnan(lo.mc_error.se) ? 0.0 : lo.mc_error.se;
    const double s_hi = std::isnan(hi.mc_error.se) ? 0.0 : hi.mc_error.se;
    if (hi.mc_error.value > lo.mc_error.value + 4.0 * std::sqrt(s_lo * s_lo + s_hi * s_hi)) {
      out.monotone = false;
      out.findings.push_back("measured error increases from r = " + std::to_string(lo.r) + " to r = " +
                             std::to_string(hi.r) + " beyond 4 SE");
    }
  }
  return out;
}

}  // namespace nlbt
