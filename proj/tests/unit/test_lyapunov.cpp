#include <gtest/gtest.h>

#include <random>

#include "../support.hpp"
#include "nlbt/builtins.hpp"
#include "nlbt/errors.hpp"
#include "nlbt/gramians.hpp"
#include "nlbt/lyapunov.hpp"

using namespace nlbt;
using nlbt::testing::scalar;
using nlbt::testing::scalar_linear;

namespace {

QuadraticCertificate scalar_cert(double x, double calU = 1.0, double delta = 1.0) {
  return {scalar(x), delta, scalar(calU)};
}

// n = m = q = 1 with B = 1, M_1 = 1, γ_1(x) = x.
StochasticSystem scalar_with_m() {
  SystemCoefficients c;
  c.f = CoefficientField::linear(scalar(-1.0));
  c.B = scalar(1.0);
  c.G = {CoefficientField::zero(1, 1)};
  c.Gamma = {CoefficientField::linear(scalar(1.0))};
  c.M = {scalar(1.0)};
  c.h = CoefficientField::linear(scalar(1.0));
  c.E = scalar(0.0);
  c.K = scalar(1.0);
  return StochasticSystem(c);
}

VectorXd v1(double a) { return VectorXd::Constant(1, a); }

}  // namespace

TEST(EvalLV, CoincidentPointsGiveZero) {
  const StochasticSystem s = example1(4);
  const auto cert = QuadraticCertificate::identity(4, 1);
  const VectorXd x = Eigen::Vector4d(0.3, -2.0, 1.0, 5.0);
  EXPECT_EQ(eval_LV(s, cert, x, x), 0.0);
}

TEST(EvalLV, ScalarHandValue) {
  const StochasticSystem s = scalar_linear(-1.0, 0.0, 1.0, 1.0);
  EXPECT_DOUBLE_EQ(eval_LV(s, scalar_cert(1.0), v1(1.0), v1(0.0)), -1.0);
}

TEST(EvalLV, MatchesLinearMatrixForm) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto rl = nlbt::testing::random_linear(rng, 4, 2, 2, 2);
    QuadraticCertificate cert{nlbt::testing::random_spd(rng, 4), 0.7, MatrixXd::Identity(2, 2)};
    MatrixXd form = rl.A.transpose() * cert.X + cert.X * rl.A;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) form += rl.sys.K()(i, j) * rl.N[i].transpose() * cert.X * rl.N[j];
    for (const auto& g : rl.Ng) form += cert.delta * cert.delta * g.transpose() * cert.X * g;
    for (int k = 0; k < 50; ++k) {
      const VectorXd x = nlbt::testing::random_matrix(rng, 4, 1);
      const VectorXd y = nlbt::testing::random_matrix(rng, 4, 1);
      const VectorXd d = x - y;
      EXPECT_NEAR(eval_LV(rl.sys, cert, x, y), d.dot(form * d), 1e-12);
    }
  }
}

TEST(EvalLV, SymmetricInArguments) {
  const StochasticSystem s = example1(4);
  std::mt19937_64 rng(5);
  const auto cert = QuadraticCertificate{nlbt::testing::random_spd(rng, 4), 0.5, MatrixXd::Identity(1, 1)};
  for (int k = 0; k < 50; ++k) {
    const VectorXd x = nlbt::testing::random_matrix(rng, 4, 1, 3.0);
    const VectorXd y = nlbt::testing::random_matrix(rng, 4, 1, 3.0);
    const double a = eval_LV(s, cert, x, y);
    EXPECT_NEAR(a, eval_LV(s, cert, y, x), 1e-12 * (1.0 + std::abs(a)));
  }
}

TEST(EvalLV, ScalesLinearlyInX) {
  const StochasticSystem s = example1(3);
  std::mt19937_64 rng(9);
  const MatrixXd X = nlbt::testing::random_spd(rng, 3);
  const QuadraticCertificate a{X, 1.0, MatrixXd::Identity(1, 1)};
  const QuadraticCertificate b{2.5 * X, 1.0, MatrixXd::Identity(1, 1)};
  for (int k = 0; k < 20; ++k) {
    const VectorXd x = nlbt::testing::random_matrix(rng, 3, 1);
    const VectorXd y = nlbt::testing::random_matrix(rng, 3, 1);
    const double la = eval_LV(s, a, x, y);
    EXPECT_NEAR(eval_LV(s, b, x, y), 2.5 * la, 1e-12 * (1.0 + std::abs(la)));
    const VectorXd sa = eval_S(s, X, x, y);
    EXPECT_LE((eval_S(s, 2.5 * X, x, y) - 2.5 * sa).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + sa.norm()));
  }
}

TEST(EvalU, ZeroMGivesCalU) {
  const StochasticSystem s = example1(3);
  QuadraticCertificate cert = QuadraticCertificate::identity(3, 1);
  cert.calU = scalar(2.5);
  EXPECT_EQ(eval_U(s, cert, cert.X), scalar(2.5));
}

TEST(EvalU, ScalarHandValue) {
  const StochasticSystem s = scalar_with_m();
  EXPECT_DOUBLE_EQ(eval_U(s, scalar_cert(1.0, 2.0), scalar(1.0))(0, 0), 1.0);
}

TEST(EvalU, TraceIdentityAndSymmetry) {
  std::mt19937_64 rng(21);
  const int n = 3, m = 2, q = 2;
  SystemCoefficients c;
  c.f = CoefficientField::linear(-MatrixXd::Identity(n, n));
  c.B = nlbt::testing::random_matrix(rng, n, m);
  c.G = {CoefficientField::zero(n, n), CoefficientField::zero(n, n)};
  c.Gamma = {CoefficientField::sine(n), CoefficientField::linear(nlbt::testing::random_matrix(rng, n, n))};
  c.M = {nlbt::testing::random_matrix(rng, n, m), nlbt::testing::random_matrix(rng, n, m)};
  c.h = CoefficientField::linear(MatrixXd::Identity(n, n));
  c.E = MatrixXd::Zero(n, m);
  c.K = (MatrixXd(q, q) << 1.0, 0.3, 0.3, 0.5).finished();
  const StochasticSystem s(c);
  const MatrixXd X = nlbt::testing::random_spd(rng, n);
  const QuadraticCertificate cert{X, 1.0, nlbt::testing::random_spd(rng, m, 5.0, 6.0)};
  const MatrixXd U = eval_U(s, cert, X);
  EXPECT_LE((U - U.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  for (int k = 0; k < 20; ++k) {
    const VectorXd z = nlbt::testing::random_matrix(rng, m, 1);
    MatrixXd Mz(n, q);
    for (int j = 0; j < q; ++j) Mz.col(j) = c.M[j] * z;
    const double expect = z.dot(cert.calU * z) - (Mz * c.K * Mz.transpose() * X).trace();
    EXPECT_NEAR(z.dot(U * z), expect, 1e-12 * (1.0 + std::abs(expect)));
  }
  // S trace identity
  for (int k = 0; k < 20; ++k) {
    const VectorXd x = nlbt::testing::random_matrix(rng, n, 1);
    const VectorXd y = nlbt::testing::random_matrix(rng, n, 1);
    const VectorXd z = nlbt::testing::random_matrix(rng, m, 1);
    MatrixXd Mz(n, q);
    for (int j = 0; j < q; ++j) Mz.col(j) = c.M[j] * z;
    const MatrixXd dG = s.eval_Gamma(x) - s.eval_Gamma(y);
    const double expect = z.dot(c.B.transpose() * X * (x - y)) + (dG * c.K * Mz.transpose() * X).trace();
    EXPECT_NEAR(z.dot(eval_S(s, X, x, y)), expect, 1e-12 * (1.0 + std::abs(expect)));
  }
}

TEST(EvalS, ScalarHandValueAndCoincidence) {
  const StochasticSystem s = scalar_with_m();
  EXPECT_DOUBLE_EQ(eval_S(s, scalar(1.0), v1(2.0), v1(0.0))(0), 4.0);
  EXPECT_EQ(eval_S(s, scalar(1.0), v1(0.7), v1(0.7))(0), 0.0);
}

TEST(Residuals, ScalarReachability) {
  const StochasticSystem s = scalar_linear(-1.0, 1.0, 1.0);
  const auto cert = scalar_cert(1.0);
  for (double d : {0.5, 1.0, 3.0}) {
    EXPECT_NEAR(reachability_residual(s, cert, scalar(0.5), v1(d), v1(0.0)), 0.0, 1e-13);
    EXPECT_NEAR(reachability_residual(s, cert, scalar(0.25), v1(d), v1(0.0)), 8.0 * d * d, 1e-12);
  }
  EXPECT_EQ(reachability_residual(s, cert, scalar(0.25), v1(1.3), v1(1.3)), 0.0);
}

TEST(Residuals, ScalarObservability) {
  const StochasticSystem s = scalar_linear(-1.0, 1.0, 1.0);
  const auto cert = scalar_cert(1.0);
  for (double d : {0.5, 1.0, 3.0}) {
    EXPECT_NEAR(observability_residual(s, cert, scalar(0.5), v1(d), v1(0.0)), 0.0, 1e-13);
    EXPECT_NEAR(observability_residual(s, cert, scalar(0.25), v1(d), v1(0.0)), 0.5 * d * d, 1e-12);
  }
  EXPECT_EQ(observability_residual(s, cert, scalar(0.25), v1(2.0), v1(2.0)), 0.0);
}

TEST(Certify, NonGramianScalarFails) {
  const StochasticSystem s = scalar_linear(-1.0, 1.0, 1.0);
  const auto cert = scalar_cert(1.0);
  const auto exact = certify_inequality(s, cert, scalar(0.25), Inequality::Reach, {});
  EXPECT_FALSE(exact.pass);
  EXPECT_EQ(exact.method, "exact-linear");
  EXPECT_GT(exact.max_residual, 0.0);
  SamplingPlan plan;
  plan.force_sampling = true;
  const auto sampled = certify_inequality(s, cert, scalar(0.25), Inequality::Reach, plan);
  EXPECT_FALSE(sampled.pass);
  EXPECT_EQ(sampled.method, "sampled");
  EXPECT_EQ(sampled.n_samples, plan.pairs);
  EXPECT_GT(sampled.max_residual, 0.0);
}

TEST(Certify, TightScalarGramianPasses) {
  const StochasticSystem s = scalar_linear(-1.0, 1.0, 1.0);
  const auto cert = scalar_cert(1.0);
  EXPECT_TRUE(certify_inequality(s, cert, scalar(0.5), Inequality::Reach, {}).pass);
  EXPECT_TRUE(certify_inequality(s, cert, scalar(0.5), Inequality::Obs, {}).pass);
}

TEST(Certify, EmptyPlanIsAnError) {
  SamplingPlan plan;
  plan.pairs = 0;
  try {
    certify_inequality(example1(3), QuadraticCertificate::identity(3, 1), MatrixXd::Identity(3, 3),
                       Inequality::Obs, plan);
    FAIL() << "expected UsageError";
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("empty sampling plan"), std::string::npos);
  }
}

TEST(Certify, CalUTooSmallIsReported) {
  const StochasticSystem s = scalar_with_m();
  EXPECT_THROW(certify_inequality(s, scalar_cert(1.0, 0.5), scalar(1.0), Inequality::Reach, {}), CertificationError);
}

TEST(Certify, ComputedGramiansOfCubicExamplePass) {
  const StochasticSystem s = example1(6);
  const auto cert = QuadraticCertificate::identity(6, 1);
  const GramianPair gp = compute_gramians(s, cert, {});
  for (auto which : {Inequality::Reach, Inequality::Obs}) {
    const auto rep = certify_inequality(s, cert, which == Inequality::Reach ? gp.P : gp.Q, which, {});
    EXPECT_TRUE(rep.pass) << to_string(which);
    EXPECT_EQ(rep.n_samples, 10000);
    EXPECT_LE(rep.max_residual, 1e-9);
  }
}

TEST(SamplePairs, DeterministicAndStructured) {
  SamplingPlan plan;
  plan.pairs = 400;
  const auto a = sample_pairs(3, plan);
  const auto b = sample_pairs(3, plan);
  ASSERT_EQ(a.size(), 400u);
  int mirrored = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_EQ(a[i].second, b[i].second);
    if (a[i].first == -a[i].second && a[i].first.norm() > 0) ++mirrored;
  }
  EXPECT_GE(mirrored, 400 * 15 / 100 - 1);
}

TEST(Inequality, NamesRoundTrip) {
  for (auto w : {Inequality::Reach, Inequality::Obs, Inequality::ReachSimplified, Inequality::ObsSimplified}) {
    EXPECT_EQ(inequality_from_string(to_string(w)), w);
  }
  EXPECT_THROW(inequality_from_string("sideways"), UsageError);
}
