#include "nlbt/gramians.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>

#include "nlbt/errors.hpp"

namespace nlbt {

namespace {

using Eigen::MatrixXcd;

// kron(P, Q) accumulated into out with weight w.
void add_kron(MatrixXd& out, const MatrixXd& p, const MatrixXd& q, double w) {
  const auto qr = q.rows(), qc = q.cols();
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double pij = w * p(i, j);
      if (pij != 0.0) out.block(i * qr, j * qc, qr, qc) += pij * q;
    }
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

}  // namespace

struct GeneralizedLyapunovSolver::Impl {
  bool dense = true;
  Eigen::PartialPivLU<MatrixXd> lu;
  MatrixXd kron;  // kept for the singular-value diagnostic
  MatrixXcd U;    // complex Schur: A = U T U^H
  MatrixXcd T;
};

GeneralizedLyapunovSolver::GeneralizedLyapunovSolver(MatrixXd A, std::vector<MatrixXd> N, MatrixXd K)
    : a_(std::move(A)), n_(std::move(N)), k_(std::move(K)) {
  const auto n = a_.rows();
  if (a_.cols() != n || n == 0) throw DimensionError("Lyapunov solver: A must be square and nonempty");
  if (n > kMaxLyapunovDim) {
    throw UsageError("Lyapunov solver: n = " + std::to_string(n) + " exceeds the dense limit of " +
                     std::to_string(kMaxLyapunovDim));
  }
  if (k_.rows() != static_cast<Eigen::Index>(n_.size()) || k_.cols() != k_.rows()) {
    throw DimensionError("Lyapunov solver: K must be q x q with q = number of noise matrices");
  }
  for (const auto& m : n_) {
    if (m.rows() != n || m.cols() != n) throw DimensionError("Lyapunov solver: noise matrices must be n x n");
  }

  auto impl = std::make_shared<Impl>();
  if (n <= kKroneckerDim) {
    const auto nn = n * n;
    const MatrixXd I = MatrixXd::Identity(n, n);
    const MatrixXd At = a_.transpose();
    impl->kron = MatrixXd::Zero(nn, nn);
    add_kron(impl->kron, I, At, 1.0);
    add_kron(impl->kron, At, I, 1.0);
    for (std::size_t i = 0; i < n_.size(); ++i) {
      for (std::size_t j = 0; j < n_.size(); ++j) {
        const double k = k_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (k != 0.0) add_kron(impl->kron, n_[j].transpose(), n_[i].transpose(), k);
      }
    }
    impl->lu.compute(impl->kron);
    if (!(impl->lu.rcond() > 1e3 * std::numeric_limits<double>::epsilon())) {
      Eigen::BDCSVD<MatrixXd> svd(impl->kron);
      const double smin = svd.singularValues()(nn - 1);
      throw InstabilityError(
          "generalized Lyapunov operator is singular (smallest singular value " + fmt(smin) +
          "); the system is not mean-square stable");
    }
  } else {
    impl->dense = false;
    Eigen::ComplexSchur<MatrixXd> schur(a_);
    impl->U = schur.matrixU();
    impl->T = schur.matrixT();
    double smin = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < n; ++k) {
        smin = std::min(smin, std::abs(std::conj(impl->T(i, i)) + impl->T(k, k)));
      }
    }
    if (smin <= 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, a_.norm())) {
      throw InstabilityError("Lyapunov operator is singular (min |conj(l_i) + l_k| = " + fmt(smin) +
                             "); the system is not mean-square stable");
    }
  }
  impl_ = std::move(impl);
}

MatrixXd GeneralizedLyapunovSolver::apply(const MatrixXd& Y) const {
  MatrixXd out = a_.transpose() * Y + Y * a_;
  for (std::size_t i = 0; i < n_.size(); ++i) {
    for (std::size_t j = 0; j < n_.size(); ++j) {
      const double k = k_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (k != 0.0) out += k * n_[i].transpose() * Y * n_[j];
    }
  }
  return out;
}

namespace {

// A^T Y + Y A = −F with A = U T U^H.
MatrixXd schur_lyapunov(const MatrixXcd& U, const MatrixXcd& T, const MatrixXd& F) {
  const auto n = T.rows();
  const MatrixXcd rhs = -(U.adjoint() * F.cast<std::complex<double>>() * U);
  const MatrixXcd Th = T.adjoint();
  MatrixXcd Z(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Eigen::VectorXcd col = rhs.col(k);
    for (Eigen::Index i = 0; i < k; ++i) col -= T(i, k) * Z.col(i);
    MatrixXcd lhs = Th;
    lhs.diagonal().array() += T(k, k);
    Z.col(k) = lhs.triangularView<Eigen::Lower>().solve(col);
  }
  return (U * Z * U.adjoint()).real();
}

}  // namespace

MatrixXd GeneralizedLyapunovSolver::solve(const MatrixXd& rhs) const {
  const auto n = a_.rows();
  if (rhs.rows() != n || rhs.cols() != n) throw DimensionError("Lyapunov solver: RHS must be n x n");
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) return MatrixXd::Zero(n, n);
  const double tol = 1e-10 * rhs_norm;

  MatrixXd Y;
  if (impl_->dense) {
    const Eigen::Map<const VectorXd> b(rhs.data(), n * n);
    VectorXd v = impl_->lu.solve(VectorXd(-b));
    Y = symmetrize(Eigen::Map<MatrixXd>(v.data(), n, n));
    // One step of iterative refinement.
    MatrixXd res = apply(Y) + rhs;
    if (res.norm() > 1e-2 * tol) {
      const Eigen::Map<const VectorXd> rv(res.data(), n * n);
      VectorXd dv = impl_->lu.solve(VectorXd(-rv));
      Y = symmetrize(Y + Eigen::Map<MatrixXd>(dv.data(), n, n));
    }
  } else {
    Y = symmetrize(schur_lyapunov(impl_->U, impl_->T, rhs));
    if (!n_.empty()) {
      constexpr int kMaxIter = 2000;
      int it = 0;
      for (; it < kMaxIter; ++it) {
        MatrixXd noise = apply(Y) - (a_.transpose() * Y + Y * a_);
        MatrixXd next = symmetrize(schur_lyapunov(impl_->U, impl_->T, rhs + noise));
        const double step = (next - Y).norm();
        Y = std::move(next);
        if (!Y.allFinite() || Y.norm() > 1e14 * std::max(1.0, rhs_norm)) break;
        if (step <= 1e-14 * std::max(Y.norm(), 1e-300)) break;
      }
      if (!Y.allFinite() || it == kMaxIter || Y.norm() > 1e14 * std::max(1.0, rhs_norm)) {
        throw InstabilityError(
            "generalized Lyapunov iteration diverged; the system is not mean-square stable");
      }
    }
  }
  const double res = (apply(Y) + rhs).norm();
  if (!(res <= tol)) {
    throw InstabilityError("generalized Lyapunov solve is ill-conditioned (relative residual " +
                           fmt(res / rhs_norm) + ")");
  }
  return Y;
}

bool GeneralizedLyapunovSolver::mean_square_stable() const {
  try {
    return is_positive_definite(solve(MatrixXd::Identity(a_.rows(), a_.cols())));
  } catch (const InstabilityError&) {
    return false;
  }
}

MatrixXd solve_generalized_lyapunov(const MatrixXd& A, const std::vector<MatrixXd>& N, const MatrixXd& K,
                                    const MatrixXd& rhs) {
  return GeneralizedLyapunovSolver(A, N, K).solve(rhs);
}

const char* to_string(GramianMode mode) { return mode == GramianMode::Full ? "full" : "simplified"; }

namespace {

bool is_diagonal(const MatrixXd& X) {
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      if (i != j && X(i, j) != 0.0) return false;
    }
  }
  return true;
}

// Smallest generalized eigenvalue of (−M, X), i.e. the best λ in
// d^T M d ≤ −λ d^T X d.
double rate_from_matrix(const MatrixXd& M, const MatrixXd& R) {
  const MatrixXd Rinv = R.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(R.rows(), R.cols()));
  return min_eigenvalue(-(Rinv * M * Rinv.transpose()));
}

// λ through the chain: cubic term ≤ 0, square columns absorbed by the cubic
// term when (#square) δ² ≤ 1, Lipschitz bound on non-linear Γ.
std::optional<double> analytic_rate(const StochasticSystem& sys, const QuadraticCertificate& cert,
                                    const QuadraticForm& form) {
  const MatrixXd& D = cert.X;
  if (!is_diagonal(D)) return std::nullopt;
  MatrixXd A;
  bool cubic = false;
  switch (sys.f().kind()) {
    case FieldKind::Linear: A = sys.f().matrix(); break;
    case FieldKind::CubicDrift: A = sys.f().matrix(); cubic = true; break;
    case FieldKind::Zero: A = MatrixXd::Zero(sys.n(), sys.n()); break;
    default: return std::nullopt;
  }
  const double d2 = cert.delta * cert.delta;
  MatrixXd M = A.transpose() * D + D * A;
  int squares = 0;
  for (const auto& g : sys.G()) {
    if (g.is_identically_zero()) continue;
    if (g.kind() == FieldKind::Square) {
      ++squares;
      continue;
    }
    auto ng = g.linear_matrix();
    if (!ng) return std::nullopt;
    M += d2 * ng->transpose() * D * *ng;
  }
  if (squares > 0 && (!cubic || squares * d2 > 1.0)) return std::nullopt;

  bool all_linear = true;
  for (const auto& gj : sys.Gamma()) all_linear = all_linear && gj.linear_matrix().has_value();
  double gamma_bound = 0.0;
  if (all_linear) {
    for (int i = 0; i < sys.q(); ++i) {
      const MatrixXd Ni = *sys.Gamma()[static_cast<std::size_t>(i)].linear_matrix();
      for (int j = 0; j < sys.q(); ++j) {
        const double k = sys.K()(i, j);
        if (k != 0.0) M += k * Ni.transpose() * D * *sys.Gamma()[static_cast<std::size_t>(j)].linear_matrix();
      }
    }
  } else {
    const VectorXd diag = D.diagonal();
    const double cond = diag.maxCoeff() / diag.minCoeff();
    double sum = 0.0;
    for (const auto& gj : sys.Gamma()) {
      if (gj.is_identically_zero()) continue;
      auto c = gj.euclidean_lipschitz();
      if (!c) return std::nullopt;
      // Elementwise fields keep their constant in any diagonal weight.
      const double factor = gj.kind() == FieldKind::Sine ? 1.0 : cond;
      sum += (*c) * (*c) * factor;
    }
    gamma_bound = spectral_norm(sys.K()) * sum;
  }
  return rate_from_matrix(M, form.factor()) - gamma_bound;
}

struct Sampled {
  double inf = std::numeric_limits<double>::infinity();
  std::pair<VectorXd, VectorXd> arg;
};

Sampled sampled_rate(const StochasticSystem& sys, const QuadraticCertificate& cert, const SamplingPlan& plan,
                     GramianMode mode) {
  const LyapunovOperator op(sys, cert.X, cert.delta);
  const auto pairs = sample_pairs(sys.n(), plan);
  const VectorXd zero = VectorXd::Zero(sys.n());
  Sampled out;
  for (const auto& [x, y0] : pairs) {
    const VectorXd& y = mode == GramianMode::Simplified ? zero : y0;
    const VectorXd d = x - y;
    const double v = op.weight().value(d);
    if (!(v > 0.0)) continue;
    const double ratio = -op.LV(x, y) / v;
    if (ratio < out.inf) {
      out.inf = ratio;
      out.arg = {x, y};
    }
  }
  return out;
}

// sup ‖R^T (F(x) − F(y))‖ / ‖R^T (x − y)‖ over the plan.
double sampled_field_constant(const CoefficientField& F, const MatrixXd& Rt_out, const MatrixXd& Rt_in,
                              const SamplingPlan& plan, GramianMode mode) {
  const auto pairs = sample_pairs(static_cast<int>(Rt_in.rows()), plan);
  double sup = 0.0;
  for (const auto& [x, y0] : pairs) {
    const VectorXd y = mode == GramianMode::Simplified ? VectorXd::Zero(x.size()) : y0;
    const double den = (Rt_in * (x - y)).norm();
    if (!(den > 0.0)) continue;
    sup = std::max(sup, (Rt_out * (F(x) - F(y))).norm() / den);
  }
  return sup;
}

}  // namespace

LipschitzData estimate_lipschitz_data(const StochasticSystem& sys, const QuadraticCertificate& cert,
                                      const SamplingPlan& plan, GramianMode mode) {
  cert.validate(sys.n(), sys.m());
  const QuadraticForm form(cert.X, "X");
  const MatrixXd& R = form.factor();
  const MatrixXd Rt = R.transpose();
  const MatrixXd Rt_inv = Rt.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(sys.n(), sys.n()));
  const double norm_Rt = spectral_norm(Rt);
  const double norm_Rt_inv = spectral_norm(Rt_inv);

  LipschitzData lip;
  lip.mode = mode;

  const Sampled sampled = sampled_rate(sys, cert, plan, mode);
  lip.lambda_sampled = sampled.inf;
  lip.argmin = sampled.arg;
  if (auto view = linearize_catalog(sys)) {
    lip.lambda = rate_from_matrix(view->lyapunov_form(cert.X, sys.K(), cert.delta), R);
    lip.lambda_source = "exact-linear";
  } else if (auto a = analytic_rate(sys, cert, form)) {
    lip.lambda = *a;
    lip.lambda_source = "analytic-chain";
  } else {
    lip.lambda = sampled.inf;
    lip.lambda_source = "sampled";
  }
  if (!(lip.lambda > 0.0)) {
    throw LipschitzFailure("one-sided Lipschitz condition fails (lambda = " + fmt(lip.lambda) + ", " +
                           lip.lambda_source + "): no Gramian constructible by the epsilon route");
  }

  lip.c_gamma_source = "none";
  for (const auto& gj : sys.Gamma()) {
    double c = 0.0;
    std::string src;
    if (gj.is_identically_zero()) {
      src = "exact-linear";
    } else if (auto N = gj.linear_matrix()) {
      c = spectral_norm(Rt * *N * Rt_inv);
      src = "exact-linear";
    } else if (gj.kind() == FieldKind::Sine && is_diagonal(cert.X)) {
      c = 1.0;
      src = "catalog";
    } else if (auto e = gj.euclidean_lipschitz()) {
      c = norm_Rt * *e * norm_Rt_inv;
      src = "catalog";
    } else {
      c = sampled_field_constant(gj, Rt, Rt, plan, mode);
      src = "sampled";
    }
    lip.c_gamma = std::max(lip.c_gamma, c);
    if (lip.c_gamma_source == "none" || src == "sampled" || (src == "catalog" && lip.c_gamma_source != "sampled")) {
      lip.c_gamma_source = src;
    }
  }

  if (auto C = sys.h().linear_matrix()) {
    lip.c_h = spectral_norm(*C * Rt_inv);
    lip.c_h_source = "exact-linear";
  } else if (auto e = sys.h().euclidean_lipschitz()) {
    lip.c_h = *e * norm_Rt_inv;
    lip.c_h_source = "catalog";
  } else {
    lip.c_h = sampled_field_constant(sys.h(), MatrixXd::Identity(sys.p(), sys.p()), Rt, plan, mode);
    lip.c_h_source = "sampled";
  }

  lip.c_B = sys.m() > 0 ? spectral_norm(Rt * sys.B()) : 0.0;
  for (int i = 0; i < sys.q(); ++i) {
    const double mi = spectral_norm(Rt * sys.M()[static_cast<std::size_t>(i)]);
    for (int j = 0; j < sys.q(); ++j) lip.c_M += mi * std::abs(sys.K()(i, j)) * lip.c_gamma;
  }
  if (sys.m() > 0) {
    lip.c_min = min_eigenvalue(cert.calU);
    QuadraticCertificate zero_u = cert;
    zero_u.calU = MatrixXd::Zero(sys.m(), sys.m());
    const MatrixXd coupling = -eval_U(sys, zero_u, cert.X);
    lip.mu_max = std::max(0.0, max_eigenvalue(coupling));
  } else {
    lip.c_min = 1.0;
  }
  return lip;
}

namespace {

[[noreturn]] void throw_uncertified(const char* which, const CertifyReport& rep, int steps) {
  std::ostringstream os;
  os << which << " inequality still fails after " << steps << " refinement steps (max residual "
     << rep.max_residual << " at x = [" << rep.argmax_pair.first.transpose() << "], y = ["
     << rep.argmax_pair.second.transpose() << "])";
  throw CertificationError(os.str());
}

}  // namespace

GramianPair epsilon_gramians(const StochasticSystem& sys, const QuadraticCertificate& cert, const LipschitzData& lip,
                             const SamplingPlan& plan) {
  if (!(lip.lambda > 0.0)) throw LipschitzFailure("epsilon construction needs lambda > 0");
  cert.validate(sys.n(), sys.m());
  constexpr double kTiny = 1e-300;

  const double den = 2.0 * (lip.c_B * lip.c_B + lip.c_M * lip.c_M) + lip.lambda * lip.mu_max;
  const double eps_star = den > 0.0 ? lip.lambda * lip.c_min / den : kEpsilonCap;
  double eps_P = std::min({0.5 * lip.c_min / std::max(lip.mu_max, kTiny), eps_star, kEpsilonCap});
  double eps_Q = lip.c_h > 0.0 ? std::min(lip.lambda / (lip.c_h * lip.c_h), kEpsilonCap) : kEpsilonCap;

  const Inequality reach = lip.mode == GramianMode::Full ? Inequality::Reach : Inequality::ReachSimplified;
  const Inequality obs = lip.mode == GramianMode::Full ? Inequality::Obs : Inequality::ObsSimplified;
  const MatrixXd X_inv = spd_inverse(cert.X, "X");

  GramianPair gp;
  gp.provenance = "epsilon-construction";
  gp.mode = lip.mode;
  gp.cert = cert;
  gp.lip = lip;

  for (gp.halvings_P = 0;; ++gp.halvings_P) {
    gp.P = symmetrize(X_inv / eps_P);
    gp.reach_report = certify_inequality(sys, cert, gp.P, reach, plan);
    if (gp.reach_report.pass) break;
    if (gp.halvings_P == kMaxHalvings) throw_uncertified("reachability", gp.reach_report, kMaxHalvings);
    eps_P *= 0.5;
  }
  for (gp.halvings_Q = 0;; ++gp.halvings_Q) {
    gp.Q = symmetrize(cert.X / eps_Q);
    gp.obs_report = certify_inequality(sys, cert, gp.Q, obs, plan);
    if (gp.obs_report.pass) break;
    if (gp.halvings_Q == kMaxHalvings) throw_uncertified("observability", gp.obs_report, kMaxHalvings);
    eps_Q *= 0.5;
  }
  gp.eps_P = eps_P;
  gp.eps_Q = eps_Q;
  return gp;
}

GramianPair linear_gramians(const LinearSystemView& view, const StochasticSystem& sys,
                            const QuadraticCertificate& cert, const SamplingPlan& plan) {
  cert.validate(sys.n(), sys.m());
  auto epsilon_route = [&] {
    const LipschitzData lip = estimate_lipschitz_data(sys, cert, plan);
    return epsilon_gramians(sys, cert, lip, plan);
  };
  if (!sys.M_is_zero()) return epsilon_route();

  auto [N_aug, K_aug] = view.augmented_noise(sys.K(), cert.delta);
  const GeneralizedLyapunovSolver obs_solver(view.A, N_aug, K_aug);
  if (!obs_solver.mean_square_stable()) {
    throw InstabilityError("system is not mean-square stable: the generalized Lyapunov operator has no "
                           "positive definite solution");
  }
  std::vector<MatrixXd> N_dual;
  for (const auto& m : N_aug) N_dual.push_back(m.transpose());
  const GeneralizedLyapunovSolver reach_solver(view.A.transpose(), N_dual, K_aug);

  SamplingPlan exact = plan;
  exact.force_sampling = false;

  GramianPair gp;
  gp.provenance = "linear-exact";
  gp.cert = cert;
  gp.Q = obs_solver.solve(view.C.transpose() * view.C);
  gp.obs_report = certify_inequality(sys, cert, gp.Q, Inequality::Obs, exact);
  if (!gp.obs_report.pass) throw_uncertified("observability", gp.obs_report, 0);

  const MatrixXd BUB = sys.m() > 0 ? MatrixXd(sys.B() * spd_inverse(cert.calU, "calU") * sys.B().transpose())
                                   : MatrixXd::Zero(sys.n(), sys.n());
  const MatrixXd P0 = reach_solver.solve(BUB);
  if (!is_positive_definite(P0)) {
    // Not reachable in every direction: P^{-1} does not exist.
    return epsilon_route();
  }
  double scale = 1.0;
  for (gp.scalings_P = 0;; ++gp.scalings_P) {
    gp.P = symmetrize(P0 * scale);
    gp.reach_report = certify_inequality(sys, cert, gp.P, Inequality::Reach, exact);
    if (gp.reach_report.pass) return gp;
    // Once the linear part of the residual is indefinite no scaling helps;
    // the ε-construction still certifies whenever λ > 0.
    if (gp.scalings_P == kMaxLinearScalings) break;
    scale /= 0.9;  // P^{-1} shrinks by 0.9
  }
  return epsilon_route();
}

GramianPair user_gramians(const StochasticSystem& sys, const QuadraticCertificate& cert, MatrixXd P, MatrixXd Q,
                          const SamplingPlan& plan, GramianMode mode) {
  cert.validate(sys.n(), sys.m());
  GramianPair gp;
  gp.provenance = "user-supplied";
  gp.mode = mode;
  gp.cert = cert;
  gp.P = std::move(P);
  gp.Q = std::move(Q);
  const bool full = mode == GramianMode::Full;
  gp.reach_report = certify_inequality(sys, cert, gp.P, full ? Inequality::Reach : Inequality::ReachSimplified, plan);
  if (!gp.reach_report.pass) throw_uncertified("reachability", gp.reach_report, 0);
  gp.obs_report = certify_inequality(sys, cert, gp.Q, full ? Inequality::Obs : Inequality::ObsSimplified, plan);
  if (!gp.obs_report.pass) throw_uncertified("observability", gp.obs_report, 0);
  return gp;
}

GramianPair compute_gramians(const StochasticSystem& sys, const QuadraticCertificate& cert, const SamplingPlan& plan,
                             GramianMode mode) {
  if (auto view = linearize_catalog(sys)) return linear_gramians(*view, sys, cert, plan);
  const LipschitzData lip = estimate_lipschitz_data(sys, cert, plan, mode);
  return epsilon_gramians(sys, cert, lip, plan);
}

}  // namespace nlbt
