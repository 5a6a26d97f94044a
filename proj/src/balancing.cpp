#include "nlbt/balancing.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>

#include "nlbt/errors.hpp"

namespace nlbt {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_of(const MatrixXd& S, const VectorXd& sigma) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const std::int64_t dims[2] = {S.rows(), S.cols()};
  h = fnv1a(h, dims, sizeof dims);
  h = fnv1a(h, S.data(), sizeof(double) * static_cast<std::size_t>(S.size()));
  h = fnv1a(h, sigma.data(), sizeof(double) * static_cast<std::size_t>(sigma.size()));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void normalize_sign(Eigen::Ref<VectorXd> v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v(i)) > 1e-12) {
      if (v(i) < 0.0) v = -v;
      return;
    }
  }
}

bool lex_greater(const VectorXd& a, const VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) > b(i);
  }
  return false;
}

// Eigenpairs of a symmetric matrix, descending, with deterministic ties.
void sorted_eigen(const MatrixXd& W, VectorXd& values, MatrixXd& vectors) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(W);
  if (es.info() != Eigen::Success) throw Error("balancing: eigendecomposition failed");
  const auto n = W.rows();
  MatrixXd V = es.eigenvectors();
  for (Eigen::Index j = 0; j < n; ++j) normalize_sign(V.col(j));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const VectorXd& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return ev(a) > ev(b); });
  const double tol = 1e-12 * std::max(std::abs(ev(n - 1)), std::abs(ev(0)));
  for (std::size_t start = 0; start < order.size();) {
    std::size_t end = start + 1;
    while (end < order.size() && ev(order[start]) - ev(order[end]) <= tol) ++end;
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](auto a, auto b) { return lex_greater(V.col(a), V.col(b)); });
    start = end;
  }
  values.resize(n);
  vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    values(k) = ev(order[static_cast<std::size_t>(k)]);
    vectors.col(k) = V.col(order[static_cast<std::size_t>(k)]);
  }
}

double rel_fro(const MatrixXd& a, const MatrixXd& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace

BalancedRealization balance(const StochasticSystem& sys, const MatrixXd& P, const MatrixXd& Q) {
  const int n = sys.n();
  if (P.rows() != n || P.cols() != n || Q.rows() != n || Q.cols() != n) {
    throw DimensionError("balance: P and Q must be " + std::to_string(n) + "x" + std::to_string(n));
  }
  Eigen::LLT<MatrixXd> llt(symmetrize(P));
  if (llt.info() != Eigen::Success) throw DefinitenessError("balance: P is not positive definite");
  const MatrixXd L = llt.matrixL();
  const MatrixXd L_inv = L.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));

  VectorXd lam;
  MatrixXd V;
  sorted_eigen(symmetrize(L.transpose() * symmetrize(Q) * L), lam, V);
  const double top = lam(0);
  if (!(lam(n - 1) > 1e-14 * top) || !(lam(n - 1) > 0.0)) {
    throw DefinitenessError("balance: Q is numerically singular (smallest eigenvalue of L^T Q L is " +
                            std::to_string(lam(n - 1)) + "); no balancing transformation exists");
  }
  const VectorXd sigma = lam.cwiseSqrt();
  const VectorXd s_half = sigma.cwiseSqrt();
  const MatrixXd S = s_half.asDiagonal() * V.transpose() * L_inv;
  const MatrixXd S_inv = L * V * s_half.cwiseInverse().asDiagonal();

  const MatrixXd I = MatrixXd::Identity(n, n);
  const MatrixXd D = sigma.asDiagonal();
  if (spectral_norm(S * S_inv - I) > 1e-10) throw Error("balance: S S^{-1} deviates from the identity");
  if (rel_fro(S * P * S.transpose(), D) > 1e-8 || rel_fro(S_inv.transpose() * Q * S_inv, D) > 1e-8) {
    throw Error("balance: transformed Gramians are not diagonal to 1e-8");
  }

  const auto& c = sys.coefficients();
  SystemCoefficients b;
  b.f = c.f.conjugate(S, S_inv);
  b.B = S * c.B;
  for (const auto& g : c.G) b.G.push_back(g.conjugate(S, S_inv));
  for (const auto& g : c.Gamma) b.Gamma.push_back(g.conjugate(S, S_inv));
  for (const auto& m : c.M) b.M.push_back(S * m);
  b.h = c.h.conjugate(MatrixXd::Identity(sys.p(), sys.p()), S_inv);
  b.E = c.E;
  b.K = c.K;
  return {S, S_inv, sigma, StochasticSystem(std::move(b)), hash_of(S, sigma)};
}

ReducedSystem truncate(const BalancedRealization& bal, int r) {
  const StochasticSystem& full = bal.balanced_system;
  const int n = full.n();
  if (r < 1 || r > n) {
    throw UsageError("truncate: order r = " + std::to_string(r) + " outside 1.." + std::to_string(n));
  }
  const MatrixXd embed = MatrixXd::Identity(n, r);
  const MatrixXd keep = embed.transpose();
  const auto& c = full.coefficients();
  SystemCoefficients red;
  red.f = c.f.conjugate(keep, embed);
  red.B = c.B.topRows(r);
  for (const auto& g : c.G) red.G.push_back(g.conjugate(keep, embed));
  for (const auto& g : c.Gamma) red.Gamma.push_back(g.conjugate(keep, embed));
  for (const auto& m : c.M) red.M.push_back(m.topRows(r));
  red.h = c.h.conjugate(MatrixXd::Identity(full.p(), full.p()), embed);
  red.E = c.E;
  red.K = c.K;

  // Consistency against the padded parent.
  std::mt19937_64 rng(0x7255ULL + static_cast<std::uint64_t>(r));
  std::normal_distribution<double> normal;
  auto close = [](const VectorXd& a, const VectorXd& b) {
    return (a - b).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + b.cwiseAbs().maxCoeff());
  };
  for (int s = 0; s < 20; ++s) {
    VectorXd xr(r);
    for (int i = 0; i < r; ++i) xr(i) = normal(rng);
    const VectorXd xp = embed * xr;
    bool ok = close(red.f(xr), VectorXd(c.f(xp).head(r))) && close(red.h(xr), c.h(xp));
    for (std::size_t i = 0; ok && i < c.G.size(); ++i) ok = close(red.G[i](xr), VectorXd(c.G[i](xp).head(r)));
    for (std::size_t j = 0; ok && j < c.Gamma.size(); ++j) {
      ok = close(red.Gamma[j](xr), VectorXd(c.Gamma[j](xp).head(r)));
    }
    if (!ok) throw Error("truncate: reduced coefficients disagree with the padded parent");
  }

  return {r, StochasticSystem(std::move(red)), bal.Sigma.head(r), bal.Sigma.tail(n - r), bal.hash};
}

double hsv_tail(const VectorXd& Sigma, int r) {
  if (r < 0 || r > Sigma.size()) throw UsageError("hsv_tail: order out of range");
  return Sigma.tail(Sigma.size() - r).sum();
}

int select_order(const VectorXd& Sigma, const OrderPolicy& policy) {
  const int n = static_cast<int>(Sigma.size());
  if (n == 0) throw UsageError("select_order: empty Hankel singular value vector");
  switch (policy.kind) {
    case OrderPolicy::Kind::Fixed:
      if (policy.r < 1 || policy.r > n) {
        throw UsageError("select_order: fixed order " + std::to_string(policy.r) + " outside 1.." + std::to_string(n));
      }
      return policy.r;
    case OrderPolicy::Kind::Tolerance:
      if (!(policy.value > 0.0)) throw UsageError("select_order: tolerance must be positive");
      for (int r = 1; r < n; ++r) {
        if (2.0 * hsv_tail(Sigma, r) <= policy.value) return r;
      }
      return n;
    case OrderPolicy::Kind::Energy: {
      if (!(policy.value > 0.0) || policy.value > 1.0) throw UsageError("select_order: energy fraction must be in (0, 1]");
      const double total = Sigma.squaredNorm();
      double acc = 0.0;
      for (int r = 1; r <= n; ++r) {
        acc += Sigma(r - 1) * Sigma(r - 1);
        if (acc >= policy.value * total) return r;
      }
      return n;
    }
  }
  return n;
}

}  // namespace nlbt
