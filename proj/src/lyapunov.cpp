#include "nlbt/lyapunov.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <random>

#include "nlbt/errors.hpp"

namespace nlbt {

QuadraticCertificate QuadraticCertificate::identity(int n, int m, double delta) {
  return {MatrixXd::Identity(n, n), delta, MatrixXd::Identity(m, m)};
}

void QuadraticCertificate::validate(int n, int m) const {
  if (X.rows() != n || X.cols() != n) {
    throw DimensionError("certificate X: expected " + std::to_string(n) + "x" + std::to_string(n));
  }
  if (calU.rows() != m || calU.cols() != m) {
    throw DimensionError("certificate calU: expected " + std::to_string(m) + "x" + std::to_string(m));
  }
  if (!(delta > 0.0) || !std::isfinite(delta)) throw UsageError("certificate delta must be positive");
  if (!is_positive_definite(X)) throw DefinitenessError("certificate X is not positive definite");
  if (m > 0 && !is_positive_definite(calU)) throw DefinitenessError("certificate calU is not positive definite");
}

namespace {

void check_point(const StochasticSystem& sys, const VectorXd& v, const char* what) {
  if (v.size() != sys.n()) {
    throw DimensionError(std::string(what) + ": expected a vector of length " + std::to_string(sys.n()) +
                         ", got " + std::to_string(v.size()));
  }
}

void check_weight(const StochasticSystem& sys, const MatrixXd& X, const char* what) {
  if (X.rows() != sys.n() || X.cols() != sys.n()) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(sys.n()) + "x" +
                         std::to_string(sys.n()) + ", got " + std::to_string(X.rows()) + "x" +
                         std::to_string(X.cols()));
  }
}

}  // namespace

LyapunovOperator::LyapunovOperator(const StochasticSystem& sys, const MatrixXd& X, double delta)
    : sys_(&sys), delta_(delta) {
  check_weight(sys, X, "X");
  form_ = QuadraticForm(X, "X");
}

double LyapunovOperator::LV(const VectorXd& x, const VectorXd& y) const {
  const StochasticSystem& s = *sys_;
  check_point(s, x, "x");
  check_point(s, y, "y");
  const VectorXd d = x - y;
  const MatrixXd& X = form_.matrix();
  const MatrixXd& R = form_.factor();

  double lv = 2.0 * d.dot(X * (s.f()(x) - s.f()(y)));

  double g_term = 0.0;
  for (std::size_t i = 0; i < s.G().size(); ++i) {
    if (!s.multiplicative_mask()[i]) continue;
    g_term += (R.transpose() * (s.G()[i](x) - s.G()[i](y))).squaredNorm();
  }
  lv += delta_ * delta_ * g_term;

  if (s.q() > 0) {
    MatrixXd dgamma(s.n(), s.q());
    for (int j = 0; j < s.q(); ++j) {
      const auto& gj = s.Gamma()[static_cast<std::size_t>(j)];
      dgamma.col(j) = gj(x) - gj(y);
    }
    lv += (R.transpose() * dgamma * s.K_sqrt()).squaredNorm();
  }
  return lv;
}

VectorXd LyapunovOperator::S(const VectorXd& x, const VectorXd& y) const {
  return eval_S(*sys_, form_.matrix(), x, y);
}

double eval_LV(const StochasticSystem& sys, const QuadraticCertificate& cert, const VectorXd& x,
               const VectorXd& y) {
  return LyapunovOperator(sys, cert.X, cert.delta).LV(x, y);
}

MatrixXd eval_U(const StochasticSystem& sys, const QuadraticCertificate& cert, const MatrixXd& X) {
  check_weight(sys, X, "X");
  if (cert.calU.rows() != sys.m() || cert.calU.cols() != sys.m()) {
    throw DimensionError("calU: expected " + std::to_string(sys.m()) + "x" + std::to_string(sys.m()));
  }
  MatrixXd u = cert.calU;
  const auto& M = sys.M();
  for (int i = 0; i < sys.q(); ++i) {
    const MatrixXd mx = M[static_cast<std::size_t>(i)].transpose() * X;
    for (int j = 0; j < sys.q(); ++j) {
      const double k = sys.K()(i, j);
      if (k != 0.0) u -= k * mx * M[static_cast<std::size_t>(j)];
    }
  }
  return symmetrize(u);
}

VectorXd eval_S(const StochasticSystem& sys, const MatrixXd& X, const VectorXd& x, const VectorXd& y) {
  check_weight(sys, X, "X");
  check_point(sys, x, "x");
  check_point(sys, y, "y");
  VectorXd s = sys.B().transpose() * (X * (x - y));
  if (sys.M_is_zero()) return s;
  const auto& M = sys.M();
  for (int j = 0; j < sys.q(); ++j) {
    const auto& gj = sys.Gamma()[static_cast<std::size_t>(j)];
    const VectorXd xd = X * (gj(x) - gj(y));
    for (int i = 0; i < sys.q(); ++i) {
      const double k = sys.K()(i, j);
      if (k != 0.0) s += k * (M[static_cast<std::size_t>(i)].transpose() * xd);
    }
  }
  return s;
}

const char* to_string(Inequality which) {
  switch (which) {
    case Inequality::Reach: return "reach";
    case Inequality::Obs: return "obs";
    case Inequality::ReachSimplified: return "reach-simplified";
    case Inequality::ObsSimplified: return "obs-simplified";
  }
  return "?";
}

Inequality inequality_from_string(const std::string& s) {
  if (s == "reach") return Inequality::Reach;
  if (s == "obs") return Inequality::Obs;
  if (s == "reach-simplified") return Inequality::ReachSimplified;
  if (s == "obs-simplified") return Inequality::ObsSimplified;
  throw UsageError("unknown inequality '" + s + "'");
}

namespace {

MatrixXd reach_weight(const MatrixXd& candidate, Inequality which) {
  if (!is_reach(which)) return symmetrize(candidate);
  return spd_inverse(candidate, "reachability Gramian candidate P");
}

MatrixXd u_inverse_or_throw(const MatrixXd& U) {
  if (U.size() == 0) return U;
  Eigen::LLT<MatrixXd> llt(U);
  if (llt.info() != Eigen::Success) {
    throw CertificationError("free parameter calU too small: U_{P^-1} is not positive definite");
  }
  return symmetrize(llt.solve(MatrixXd::Identity(U.rows(), U.cols())));
}

}  // namespace

ResidualEvaluator::ResidualEvaluator(const StochasticSystem& sys, const QuadraticCertificate& cert,
                                     const MatrixXd& candidate, Inequality which)
    : sys_(&sys), which_(which), op_(sys, reach_weight(candidate, which), cert.delta) {
  if (is_reach(which)) u_inv_ = u_inverse_or_throw(eval_U(sys, cert, op_.weight().matrix()));
}

double ResidualEvaluator::operator()(const VectorXd& x, const VectorXd& y_in) const {
  const VectorXd y = is_simplified(which_) ? VectorXd::Zero(sys_->n()) : y_in;
  const double lv = op_.LV(x, y);
  if (is_reach(which_)) {
    if (u_inv_.size() == 0) return lv;
    const VectorXd s = op_.S(x, y);
    return lv + s.dot(u_inv_ * s);
  }
  return lv + (sys_->h()(x) - sys_->h()(y)).squaredNorm();
}

double reachability_residual(const StochasticSystem& sys, const QuadraticCertificate& cert, const MatrixXd& P,
                             const VectorXd& x, const VectorXd& y) {
  check_weight(sys, P, "P");
  return ResidualEvaluator(sys, cert, P, Inequality::Reach)(x, y);
}

double observability_residual(const StochasticSystem& sys, const QuadraticCertificate& cert, const MatrixXd& Q,
                              const VectorXd& x, const VectorXd& y) {
  check_weight(sys, Q, "Q");
  return ResidualEvaluator(sys, cert, Q, Inequality::Obs)(x, y);
}

std::vector<std::pair<VectorXd, VectorXd>> sample_pairs(int n, const SamplingPlan& plan) {
  if (plan.pairs <= 0) throw UsageError("empty sampling plan");
  if (plan.radii.empty()) throw UsageError("sampling plan has no radii");
  std::mt19937_64 rng(plan.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> axis(0, std::max(n - 1, 0));

  auto in_ball = [&](double radius) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = normal(rng);
    const double norm = v.norm();
    if (norm == 0.0) return v;
    return VectorXd(v * (radius * std::pow(unif(rng), 1.0 / n) / norm));
  };
  auto on_axis = [&](double radius) {
    VectorXd v = VectorXd::Zero(n);
    v(axis(rng)) = radius * (2.0 * unif(rng) - 1.0);
    return v;
  };

  const auto nr = plan.radii.size();
  std::vector<std::pair<VectorXd, VectorXd>> out;
  out.reserve(static_cast<std::size_t>(plan.pairs));
  std::size_t ball = 0, ax = 0, sym = 0;
  for (int s = 0; s < plan.pairs; ++s) {
    const int slot = s % 20;
    if (slot < 14) {
      const double r = plan.radii[ball++ % nr];
      VectorXd x = in_ball(r);
      VectorXd y = in_ball(r);
      out.emplace_back(std::move(x), std::move(y));
    } else if (slot < 17) {
      const double r = plan.radii[ax++ % nr];
      VectorXd x = on_axis(r);
      VectorXd y = on_axis(r);
      out.emplace_back(std::move(x), std::move(y));
    } else {
      const double r = plan.radii[sym++ % nr];
      VectorXd x = in_ball(r);
      VectorXd y = -x;
      out.emplace_back(std::move(x), std::move(y));
    }
  }
  return out;
}

namespace {

CertifyReport certify_exact(const StochasticSystem& sys, const QuadraticCertificate& cert,
                            const LinearSystemView& view, const ResidualEvaluator& ev, const SamplingPlan& plan) {
  const MatrixXd& W = ev.weight();
  MatrixXd R = view.lyapunov_form(W, sys.K(), cert.delta);
  if (is_reach(ev.which())) {
    if (ev.U_inverse().size() > 0) {
      MatrixXd F = sys.B().transpose() * W;
      for (int i = 0; i < sys.q(); ++i) {
        for (int j = 0; j < sys.q(); ++j) {
          const double k = sys.K()(i, j);
          if (k != 0.0) F += k * sys.M()[static_cast<std::size_t>(i)].transpose() * W * view.N[static_cast<std::size_t>(j)];
        }
      }
      R += F.transpose() * ev.U_inverse() * F;
    }
  } else {
    R += view.C.transpose() * view.C;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(R));
  const Eigen::Index top = es.eigenvalues().size() - 1;
  CertifyReport rep;
  rep.which = ev.which();
  rep.method = "exact-linear";
  rep.n_samples = 0;
  rep.max_residual = es.eigenvalues()(top);
  rep.argmax_pair = {es.eigenvectors().col(top), VectorXd::Zero(sys.n())};
  rep.tolerance = plan.tolerance;
  rep.pass = rep.max_residual <= plan.tolerance;
  return rep;
}

}  // namespace

CertifyReport certify_inequality(const StochasticSystem& sys, const QuadraticCertificate& cert,
                                 const MatrixXd& candidate, Inequality which, const SamplingPlan& plan) {
  if (plan.pairs <= 0) throw UsageError("empty sampling plan");
  check_weight(sys, candidate, is_reach(which) ? "P" : "Q");
  const ResidualEvaluator ev(sys, cert, candidate, which);

  if (!plan.force_sampling) {
    if (auto view = linearize_catalog(sys)) return certify_exact(sys, cert, *view, ev, plan);
  }

  const auto pairs = sample_pairs(sys.n(), plan);
  CertifyReport rep;
  rep.which = which;
  rep.method = "sampled";
  rep.n_samples = static_cast<int>(pairs.size());
  rep.max_residual = -std::numeric_limits<double>::infinity();
  rep.tolerance = plan.tolerance;
  const VectorXd zero = VectorXd::Zero(sys.n());
  for (const auto& [x, y] : pairs) {
    const VectorXd& yy = is_simplified(which) ? zero : y;
    const double r = ev(x, yy);
    if (!(r <= rep.max_residual)) {
      rep.max_residual = r;
      rep.argmax_pair = {x, yy};
      if (std::isnan(r)) break;
    }
  }
  rep.pass = rep.max_residual <= plan.tolerance;
  return rep;
}

}  // namespace nlbt
