#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "../support.hpp"
#include "nlbt/balancing.hpp"
#include "nlbt/builtins.hpp"
#include "nlbt/errors.hpp"
#include "nlbt/gramians.hpp"
#include "nlbt/simulation.hpp"

using namespace nlbt;
using nlbt::testing::scalar;
using nlbt::testing::scalar_linear;

namespace {

// Cubic drift with sine noise and no input matrix, as the stability probe needs.
StochasticSystem cubic_unforced(int n = 2) {
  SystemCoefficients c;
  c.f = CoefficientField::cubic_drift(-2.0 * MatrixXd::Identity(n, n));
  c.B = MatrixXd::Zero(n, 1);
  c.G = {CoefficientField::linear(MatrixXd::Identity(n, n))};
  c.Gamma = {CoefficientField::sine(n)};
  c.M = {MatrixXd::Zero(n, 1)};
  c.h = CoefficientField::linear(MatrixXd::Identity(n, n));
  c.E = MatrixXd::Zero(n, 1);
  c.K = scalar(1.0);
  return StochasticSystem(c);
}

StochasticSystem all_zero(int n) {
  SystemCoefficients c;
  c.f = CoefficientField::zero(n, n);
  c.B = MatrixXd::Zero(n, 1);
  c.G = {CoefficientField::zero(n, n)};
  c.Gamma = {CoefficientField::zero(n, n)};
  c.M = {MatrixXd::Zero(n, 1)};
  c.h = CoefficientField::zero(n, 1);
  c.E = MatrixXd::Zero(1, 1);
  c.K = scalar(1.0);
  return StochasticSystem(c);
}

ControlSignal sine_u(double T) { return ControlSignal::sinusoid(VectorXd::Ones(1), VectorXd::Constant(1, 3.0), T); }

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("NLBT_THREADS")) old_ = old;
    setenv("NLBT_THREADS", value, 1);
  }
  ~ThreadsEnv() {
    if (old_.empty()) {
      unsetenv("NLBT_THREADS");
    } else {
      setenv("NLBT_THREADS", old_.c_str(), 1);
    }
  }

 private:
  std::string old_;
};

}  // namespace

TEST(Simulate, ZeroSystemIsConstant) {
  const VectorXd v = Eigen::Vector3d(1.0, -2.0, 0.5);
  SimOptions opts;
  opts.keep_trajectories = true;
  const SimulationResult r = simulate(all_zero(3), ControlSignal::zero(1, 1.0), v, {1.0, 10, 4, 1}, opts);
  for (std::size_t i = 0; i < r.trajectories.size(); ++i) EXPECT_EQ(r.trajectories[i], v(i % 3));
  EXPECT_EQ(r.output_mean_sq.mean.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(r.l2T_norm_sq.value, 0.0);
}

TEST(Simulate, DeterministicOdeLimit) {
  const double dt = 1e-3;
  SimOptions opts;
  opts.keep_trajectories = true;
  const SimulationResult r =
      simulate(scalar_linear(-1.0, 0.0, 1.0), ControlSignal::zero(1, 1.0), VectorXd::Ones(1), {1.0, 1000, 1, 1}, opts);
  EXPECT_LE(std::abs(r.trajectories.back() - std::exp(-1.0)), 5.0 * dt);
}

TEST(Simulate, GeometricMotionSecondMoment) {
  // d/dt E x² = (−2 + 1) E x²
  const SimulationResult r = simulate(scalar_linear(-1.0, 0.0, 1.0, 1.0), ControlSignal::zero(1, 1.0),
                                      VectorXd::Ones(1), {1.0, 1000, 10000, 42});
  const double est = r.state_second_moment.mean(1000);
  const double se = r.state_second_moment.se(1000);
  EXPECT_GT(se, 0.0);
  EXPECT_LE(std::abs(est - std::exp(-1.0)), 4.0 * se) << "estimate " << est << " se " << se;
  EXPECT_GE(r.batches, 10);
}

TEST(Simulate, IncrementCovarianceMatchesK) {
  // dx = M(u) dw with M_1 u = e1, M_2 u = e2 and u ≡ 1: one step gives x = K^{1/2} ξ √dt.
  SystemCoefficients c;
  c.f = CoefficientField::zero(2, 2);
  c.B = MatrixXd::Zero(2, 1);
  c.G = {CoefficientField::zero(2, 2)};
  c.Gamma = {CoefficientField::zero(2, 2), CoefficientField::zero(2, 2)};
  c.M = {(MatrixXd(2, 1) << 1, 0).finished(), (MatrixXd(2, 1) << 0, 1).finished()};
  c.h = CoefficientField::linear(MatrixXd::Identity(2, 2));
  c.E = MatrixXd::Zero(2, 1);
  c.K = (MatrixXd(2, 2) << 2.0, 0.6, 0.6, 0.5).finished();
  const StochasticSystem s(c);
  const double dt = 0.01;
  SimOptions opts;
  opts.directions = (MatrixXd(2, 3) << 1, 0, 1 / std::sqrt(2.0), 0, 1, 1 / std::sqrt(2.0)).finished();
  const SimulationResult r = simulate(s, ControlSignal::piecewise_constant(MatrixXd::Ones(1, 1), dt),
                                      VectorXd::Zero(2), {dt, 1, 100000, 5}, opts);
  const double expect[3] = {2.0 * dt, 0.5 * dt, 0.5 * (2.0 + 0.5 + 1.2) * dt};
  for (int k = 0; k < 3; ++k) {
    const double est = r.direction_energy[k].mean(1);
    const double se = r.direction_energy[k].se(1);
    EXPECT_LE(std::abs(est - expect[k]), 4.0 * se) << "direction " << k;
  }
}

TEST(Simulate, IndependentOfWorkerCount) {
  const StochasticSystem s = example1(4);
  const SimGrid grid{1.0, 200, 300, 17};
  SimulationResult a, b;
  {
    ThreadsEnv env("1");
    a = simulate(s, sine_u(1.0), VectorXd::Zero(4), grid);
  }
  {
    ThreadsEnv env("3");
    b = simulate(s, sine_u(1.0), VectorXd::Zero(4), grid);
  }
  EXPECT_EQ(a.output_mean_sq.mean, b.output_mean_sq.mean);
  EXPECT_EQ(a.output_mean_sq.se, b.output_mean_sq.se);
  EXPECT_EQ(a.l2T_norm_sq.value, b.l2T_norm_sq.value);
  EXPECT_EQ(a.l2T_norm_sq.se, b.l2T_norm_sq.se);
}

TEST(Simulate, DivergenceAbortsAndTamingHelps) {
  SystemCoefficients c;
  c.f = CoefficientField::cubic_drift(scalar(0.0));
  c.B = scalar(0.0);
  c.G = {CoefficientField::zero(1, 1)};
  c.Gamma = {CoefficientField::zero(1, 1)};
  c.M = {scalar(0.0)};
  c.h = CoefficientField::linear(scalar(1.0));
  c.E = scalar(0.0);
  c.K = scalar(1.0);
  const StochasticSystem s(c);
  const SimGrid grid{10.0, 10, 50, 3};
  EXPECT_THROW(simulate(s, ControlSignal::zero(1, 10.0), VectorXd::Constant(1, 10.0), grid), DivergenceError);
  SimOptions tamed;
  tamed.tamed = true;
  const SimulationResult r = simulate(s, ControlSignal::zero(1, 10.0), VectorXd::Constant(1, 10.0), grid, tamed);
  EXPECT_EQ(r.flagged, 0);
  EXPECT_TRUE(r.tamed);
}

TEST(Simulate, RejectsBadGrid) {
  EXPECT_THROW(simulate(example1(2), sine_u(1.0), VectorXd::Zero(2), {1.0, 10, 0, 1}), UsageError);
  EXPECT_THROW(simulate(example1(2), sine_u(1.0), VectorXd::Zero(2), {0.0, 10, 5, 1}), UsageError);
}

TEST(Coupled, IdenticalSystemsGiveExactlyZero) {
  const StochasticSystem s = example1(3);
  const PairedResult r = simulate_coupled(s, s, sine_u(1.0), VectorXd::Zero(3), VectorXd::Zero(3), {1.0, 200, 200, 9});
  EXPECT_EQ(r.error_sq.value, 0.0);
  EXPECT_EQ(r.diff_mean_sq.mean.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Coupled, BalancedRealizationHasSameOutputs) {
  std::mt19937_64 rng(12);
  const StochasticSystem s = example1(3);
  const BalancedRealization bal =
      balance(s, nlbt::testing::random_spd(rng, 3), nlbt::testing::random_spd(rng, 3));
  const VectorXd x0 = Eigen::Vector3d(0.5, -0.2, 0.1);
  const PairedResult r = simulate_coupled(s, bal.balanced_system, sine_u(1.0), x0, bal.S * x0, {1.0, 500, 200, 4});
  EXPECT_LE(r.error_norm.value, 1e-8);
}

TEST(Coupled, IdentityTruncationHasSameOutputs) {
  const StochasticSystem s = example1(3);
  const GramianPair gp = compute_gramians(s, QuadraticCertificate::identity(3, 1), {});
  const BalancedRealization bal = balance(s, gp);
  const ReducedSystem red = truncate(bal, 3);
  const PairedResult r =
      simulate_coupled(s, red.system, sine_u(1.0), VectorXd::Zero(3), VectorXd::Zero(3), {1.0, 500, 200, 4});
  EXPECT_LE(r.error_norm.value, 1e-8);
}

TEST(Coupled, NoiseDimensionMismatch) {
  const StochasticSystem a = example1(2);
  SystemCoefficients c = a.coefficients();
  c.Gamma.push_back(CoefficientField::zero(2, 2));
  c.M.push_back(MatrixXd::Zero(2, 1));
  c.K = MatrixXd::Identity(2, 2);
  const StochasticSystem b(c);
  EXPECT_THROW(simulate_coupled(a, b, sine_u(1.0), VectorXd::Zero(2), VectorXd::Zero(2), {1.0, 10, 10, 1}),
               DimensionError);
}

TEST(StabilityProbe, CubicExampleDecays) {
  const StochasticSystem s = cubic_unforced(2);
  const auto cert = QuadraticCertificate::identity(2, 1);
  const double lambda = estimate_lipschitz_data(s, cert, {}).lambda;
  const DecayFit fit = stability_probe(s, Eigen::Vector2d(1.0, 1.0), {2.0, 2000, 2000, 8}, lambda,
                                       ControlSignal::zero(1, 2.0));
  EXPECT_TRUE(fit.decays);
  EXPECT_GE(fit.decay_rate, lambda - 0.5);
  EXPECT_TRUE(fit.envelope_ok);
}

TEST(StabilityProbe, ZeroSystemIsTrivial) {
  const DecayFit fit = stability_probe(all_zero(2), VectorXd::Zero(2), {1.0, 100, 20, 1}, 1.0,
                                       ControlSignal::zero(1, 1.0));
  EXPECT_TRUE(fit.trivial);
  EXPECT_EQ(fit.second_moment.mean.cwiseAbs().maxCoeff(), 0.0);
}

TEST(StabilityProbe, UnstableScalarDoesNotDecay) {
  const DecayFit fit = stability_probe(scalar_linear(1.0, 0.0, 1.0), VectorXd::Ones(1), {1.0, 100, 20, 1}, 1.0,
                                       ControlSignal::zero(1, 1.0));
  EXPECT_FALSE(fit.decays);
  EXPECT_LT(fit.decay_rate, 0.0);
  EXPECT_EQ(fit.note, "no decay");
}

TEST(StabilityProbe, RequiresUnforcedSystem) {
  EXPECT_THROW(stability_probe(example1(2), VectorXd::Ones(2), {1.0, 10, 10, 1}, 1.0, ControlSignal::zero(1, 1.0)),
               UsageError);
}

TEST(DirectionEnergy, ZeroControlGivesZero) {
  const DirectionEnergy d =
      direction_energy(example1(3), ControlSignal::zero(1, 1.0), {1.0, 100, 50, 2}, MatrixXd::Identity(3, 3));
  EXPECT_EQ(d.sup.cwiseAbs().maxCoeff(), 0.0);
}

TEST(DirectionEnergy, ParsevalWithIdentityDirections) {
  const DirectionEnergy d =
      direction_energy(example1(3), sine_u(1.0), {1.0, 200, 200, 2}, MatrixXd::Identity(3, 3));
  for (Eigen::Index k = 0; k < d.t.size(); ++k) {
    double sum = 0.0;
    for (const auto& e : d.energy) sum += e.mean(k);
    EXPECT_LE(std::abs(sum - d.second_moment.mean(k)), 1e-10 * (1e-300 + d.second_moment.mean(k)));
  }
}

TEST(DirectionEnergy, RejectsNonOrthonormal) {
  EXPECT_THROW(direction_energy(example1(2), sine_u(1.0), {1.0, 10, 10, 1}, 2.0 * MatrixXd::Identity(2, 2)),
               UsageError);
}

TEST(TruncationProbe, ZeroCoefficientGivesZeroError) {
  const StochasticSystem s = cubic_unforced(2);
  const TruncationProbe p = observability_truncation_probe(s, ControlSignal::zero(1, 1.0), {1.0, 100, 50, 3},
                                                           Eigen::Vector2d(1.0, 0.0), 1.0, 0.5, 1.0, VectorXd::Zero(2));
  EXPECT_EQ(p.error.value, 0.0);
  EXPECT_EQ(p.coeff_sq.value, 0.0);
  EXPECT_TRUE(p.satisfied);
}

TEST(TruncationProbe, RejectsLateBranchTime) {
  EXPECT_THROW(observability_truncation_probe(cubic_unforced(2), ControlSignal::zero(1, 1.0), {1.0, 100, 5, 3},
                                              Eigen::Vector2d(1.0, 0.0), 1.0, 1.0, 1.0, VectorXd::Zero(2)),
               UsageError);
}

TEST(Simulate, GridRefinementSanity) {
  const StochasticSystem s = cubic_unforced(2);
  const ControlSignal u = ControlSignal::zero(1, 1.0);
  const VectorXd x0 = Eigen::Vector2d(1.0, -0.5);
  const double coarse = simulate(s, u, x0, {1.0, 100, 4000, 6}).l2T_norm_sq.value;
  const double fine = simulate(s, u, x0, {1.0, 200, 4000, 6}).l2T_norm_sq.value;
  const double C = std::abs(coarse - fine) / std::sqrt(0.01);
  RecordProperty("refinement_constant", std::to_string(C));
  EXPECT_TRUE(std::isfinite(C));
  EXPECT_LT(C, 10.0);
}

TEST(Trajectories, BinaryHeader) {
  SimOptions opts;
  opts.keep_trajectories = true;
  const SimulationResult r = simulate(example1(2), sine_u(1.0), VectorXd::Zero(2), {1.0, 5, 3, 1}, opts);
  const auto path = std::filesystem::temp_directory_path() / "nlbt_traj_test.bin";
  write_trajectories(path.string(), r, 2, 5);
  std::ifstream in(path, std::ios::binary);
  char magic[4];
  std::uint32_t header[4];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof header);
  EXPECT_EQ(std::string(magic, 4), "NLBT");
  EXPECT_EQ(header[0], 1u);
  EXPECT_EQ(header[1], 2u);
  EXPECT_EQ(header[2], 5u);
  EXPECT_EQ(header[3], 3u);
  EXPECT_EQ(std::filesystem::file_size(path), 4 + 16 + sizeof(double) * 3 * 6 * 2);
  std::filesystem::remove(path);
}
