#include "nlbt/system.hpp"

#include <Eigen/Eigenvalues>
#include <limits>
#include <random>

#include "nlbt/errors.hpp"

namespace nlbt {

namespace {

void add_issue(ValidationReport& r, IssueKind kind, std::string coefficient, std::string message) {
  switch (kind) {
    case IssueKind::Dimension: r.dimensions_ok = false; break;
    case IssueKind::Origin: r.origin_ok = false; break;
    case IssueKind::Covariance: r.covariance_ok = false; break;
  }
  r.issues.push_back({kind, std::move(coefficient), std::move(message)});
}

std::string dims_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

void check_field(ValidationReport& r, const CoefficientField& f, const std::string& name, int in, int out) {
  if (f.input_dim() != in || f.output_dim() != out) {
    add_issue(r, IssueKind::Dimension, name,
              name + ": expected R^" + std::to_string(in) + " -> R^" + std::to_string(out) + ", got R^" +
                  std::to_string(f.input_dim()) + " -> R^" + std::to_string(f.output_dim()));
  }
}

void check_matrix(ValidationReport& r, const MatrixXd& a, const std::string& name, Eigen::Index rows,
                  Eigen::Index cols) {
  if (a.rows() != rows || a.cols() != cols) {
    add_issue(r, IssueKind::Dimension, name,
              name + ": expected " + dims_str(rows, cols) + ", got " + dims_str(a.rows(), a.cols()));
  } else if (!a.allFinite()) {
    add_issue(r, IssueKind::Dimension, name, name + ": contains non-finite entries");
  }
}

void check_origin(ValidationReport& r, const CoefficientField& f, const std::string& name) {
  const VectorXd zero = VectorXd::Zero(f.input_dim());
  const VectorXd v = f(zero);
  const double norm = v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff();
  if (!(norm <= std::numeric_limits<double>::epsilon())) {
    add_issue(r, IssueKind::Origin, name,
              name + " does not vanish at the origin (|" + name + "(0)|_inf = " + std::to_string(norm) + ")");
  }
}

SymmetryRecord symmetry_of(const CoefficientField& f, const std::string& name, std::mt19937_64& rng) {
  SymmetryRecord rec;
  rec.coefficient = name;
  rec.status = f.point_symmetry();
  std::normal_distribution<double> normal;
  static constexpr double kRadii[] = {0.1, 1.0, 10.0};
  VectorXd x(f.input_dim());
  for (int s = 0; s < kSymmetrySamples; ++s) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = normal(rng);
    x *= kRadii[s % 3];
    const VectorXd d = f(x) + f(VectorXd(-x));
    if (d.size() > 0) rec.max_defect = std::max(rec.max_defect, d.norm());
  }
  if (rec.status == Symmetry::Unknown) {
    rec.sampled = true;
    rec.symmetric = rec.max_defect <= kSymmetryTolerance;
  } else {
    rec.symmetric = rec.status == Symmetry::Exact;
  }
  return rec;
}

}  // namespace

bool ValidationReport::point_symmetric() const {
  for (const auto& s : symmetry) {
    if (!s.symmetric) return false;
  }
  return true;
}

std::string ValidationReport::symmetry_method() const {
  for (const auto& s : symmetry) {
    if (s.sampled) return "sampled";
  }
  return "exact";
}

void ValidationReport::throw_if_failed() const {
  if (issues.empty()) return;
  const auto& first = issues.front();
  switch (first.kind) {
    case IssueKind::Dimension: throw DimensionError(first.message);
    case IssueKind::Origin: throw OriginViolation(first.message);
    case IssueKind::Covariance: throw DefinitenessError(first.message);
  }
}

ValidationReport validate_system(const SystemCoefficients& c, std::uint64_t seed) {
  ValidationReport r;
  const int n = c.f.input_dim();
  const int m = static_cast<int>(c.B.cols());
  const int p = c.h.output_dim();
  const int q = static_cast<int>(c.K.rows());

  check_field(r, c.f, "f", n, n);
  check_matrix(r, c.B, "B", n, m);
  if (static_cast<int>(c.G.size()) != m) {
    add_issue(r, IssueKind::Dimension, "G",
              "G: expected " + std::to_string(m) + " columns g_i, got " + std::to_string(c.G.size()));
  }
  for (std::size_t i = 0; i < c.G.size(); ++i) check_field(r, c.G[i], "g_" + std::to_string(i + 1), n, n);
  if (c.K.rows() != c.K.cols()) {
    add_issue(r, IssueKind::Dimension, "K", "K: must be square, got " + dims_str(c.K.rows(), c.K.cols()));
  }
  if (static_cast<int>(c.Gamma.size()) != q) {
    add_issue(r, IssueKind::Dimension, "Gamma",
              "Gamma: expected " + std::to_string(q) + " columns, got " + std::to_string(c.Gamma.size()));
  }
  for (std::size_t j = 0; j < c.Gamma.size(); ++j) {
    check_field(r, c.Gamma[j], "gamma_" + std::to_string(j + 1), n, n);
  }
  if (static_cast<int>(c.M.size()) != q) {
    add_issue(r, IssueKind::Dimension, "M",
              "M: expected " + std::to_string(q) + " matrices, got " + std::to_string(c.M.size()));
  }
  for (std::size_t j = 0; j < c.M.size(); ++j) check_matrix(r, c.M[j], "M_" + std::to_string(j + 1), n, m);
  check_field(r, c.h, "h", n, p);
  check_matrix(r, c.E, "E", p, m);
  if (!r.dimensions_ok) return r;

  check_origin(r, c.f, "f");
  for (std::size_t i = 0; i < c.G.size(); ++i) check_origin(r, c.G[i], "g_" + std::to_string(i + 1));
  for (std::size_t j = 0; j < c.Gamma.size(); ++j) check_origin(r, c.Gamma[j], "gamma_" + std::to_string(j + 1));
  check_origin(r, c.h, "h");

  if (q > 0) {
    if (!c.K.allFinite() || (c.K - c.K.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
      add_issue(r, IssueKind::Covariance, "K", "K: covariance must be symmetric");
    } else {
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(symmetrize(c.K), Eigen::EigenvaluesOnly);
      r.k_min_eigenvalue = es.eigenvalues()(0);
      if (r.k_min_eigenvalue < -kCovarianceClamp) {
        add_issue(r, IssueKind::Covariance, "K",
                  "K: not positive semidefinite (smallest eigenvalue " + std::to_string(r.k_min_eigenvalue) + ")");
      }
    }
  }

  if (!r.origin_ok) return r;
  std::mt19937_64 rng(seed);
  r.symmetry.push_back(symmetry_of(c.f, "f", rng));
  for (std::size_t i = 0; i < c.G.size(); ++i) r.symmetry.push_back(symmetry_of(c.G[i], "g_" + std::to_string(i + 1), rng));
  for (std::size_t j = 0; j < c.Gamma.size(); ++j) {
    r.symmetry.push_back(symmetry_of(c.Gamma[j], "gamma_" + std::to_string(j + 1), rng));
  }
  return r;
}

StochasticSystem::StochasticSystem(SystemCoefficients c) : c_(std::move(c)) {
  report_ = validate_system(c_);
  report_.throw_if_failed();
  dims_ = {c_.f.input_dim(), static_cast<int>(c_.B.cols()), c_.h.output_dim(), static_cast<int>(c_.K.rows())};
  k_sqrt_ = psd_sqrt(c_.K, "K", kCovarianceClamp);
  mask_.reserve(c_.G.size());
  for (const auto& g : c_.G) mask_.push_back(!g.is_identically_zero());
}

bool StochasticSystem::has_multiplicative_control() const {
  for (bool b : mask_) {
    if (b) return true;
  }
  return false;
}

bool StochasticSystem::M_is_zero() const {
  for (const auto& mj : c_.M) {
    if (mj.size() > 0 && mj.cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

MatrixXd StochasticSystem::eval_G(const VectorXd& x) const {
  MatrixXd out(dims_.n, dims_.m);
  for (int i = 0; i < dims_.m; ++i) {
    VectorXd col(dims_.n);
    c_.G[static_cast<std::size_t>(i)].evaluate(x, col);
    out.col(i) = col;
  }
  return out;
}

MatrixXd StochasticSystem::eval_Gamma(const VectorXd& x) const {
  MatrixXd out(dims_.n, dims_.q);
  for (int j = 0; j < dims_.q; ++j) {
    VectorXd col(dims_.n);
    c_.Gamma[static_cast<std::size_t>(j)].evaluate(x, col);
    out.col(j) = col;
  }
  return out;
}

ControlSignal multiplicative_control(const StochasticSystem& sys, const ControlSignal& u) {
  if (u.channels() != sys.m()) {
    throw DimensionError("multiplicative_control: control has " + std::to_string(u.channels()) +
                         " channels, system has m = " + std::to_string(sys.m()));
  }
  return u.masked(sys.multiplicative_mask());
}

MatrixXd LinearSystemView::lyapunov_form(const MatrixXd& X, const MatrixXd& K, double delta) const {
  MatrixXd out = A.transpose() * X + X * A;
  for (std::size_t i = 0; i < N.size(); ++i) {
    for (std::size_t j = 0; j < N.size(); ++j) {
      const double k = K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (k != 0.0) out += k * N[i].transpose() * X * N[j];
    }
  }
  for (const auto& ng : Ng) out += delta * delta * ng.transpose() * X * ng;
  return symmetrize(out);
}

std::pair<std::vector<MatrixXd>, MatrixXd> LinearSystemView::augmented_noise(const MatrixXd& K,
                                                                             double delta) const {
  std::vector<MatrixXd> all = N;
  all.insert(all.end(), Ng.begin(), Ng.end());
  const auto q = static_cast<Eigen::Index>(N.size());
  const auto mg = static_cast<Eigen::Index>(Ng.size());
  MatrixXd k_aug = MatrixXd::Zero(q + mg, q + mg);
  k_aug.topLeftCorner(q, q) = K;
  k_aug.bottomRightCorner(mg, mg) = delta * delta * MatrixXd::Identity(mg, mg);
  return {std::move(all), std::move(k_aug)};
}

std::optional<LinearSystemView> linearize_catalog(const StochasticSystem& sys) {
  LinearSystemView v;
  auto a = sys.f().linear_matrix();
  auto c = sys.h().linear_matrix();
  if (!a || !c) return std::nullopt;
  v.A = std::move(*a);
  v.C = std::move(*c);
  for (const auto& g : sys.Gamma()) {
    auto n = g.linear_matrix();
    if (!n) return std::nullopt;
    v.N.push_back(std::move(*n));
  }
  for (const auto& g : sys.G()) {
    auto n = g.linear_matrix();
    if (!n) return std::nullopt;
    if (g.is_identically_zero()) continue;
    v.Ng.push_back(std::move(*n));
  }
  return v;
}

}  // namespace nlbt
