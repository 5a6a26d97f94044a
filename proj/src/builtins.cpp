#include "nlbt/builtins.hpp"

#include <algorithm>

#include "nlbt/errors.hpp"

namespace nlbt {

namespace {

SystemCoefficients cubic_base(int n) {
  if (n < 1) throw UsageError("builtin system: n must be at least 1");
  MatrixXd A = -2.0 * MatrixXd::Identity(n, n);
  for (int i = 0; i + 1 < n; ++i) A(i, i + 1) = 0.1;
  SystemCoefficients c;
  c.f = CoefficientField::cubic_drift(A);
  c.B = MatrixXd::Ones(n, 1);
  c.Gamma = {CoefficientField::sine(n)};
  c.M = {MatrixXd::Zero(n, 1)};
  c.h = CoefficientField::linear(MatrixXd::Identity(n, n));
  c.E = MatrixXd::Zero(n, 1);
  c.K = MatrixXd::Identity(1, 1);
  return c;
}

}  // namespace

StochasticSystem example1(int n) {
  SystemCoefficients c = cubic_base(n);
  c.G = {CoefficientField::linear(0.1 * MatrixXd::Identity(n, n))};
  return StochasticSystem(std::move(c));
}

StochasticSystem example2(int n) {
  SystemCoefficients c = cubic_base(n);
  c.G = {CoefficientField::square(n)};
  return StochasticSystem(std::move(c));
}

StochasticSystem linear_demo() {
  SystemCoefficients c;
  c.f = CoefficientField::linear(MatrixXd::Constant(1, 1, -1.0));
  c.B = MatrixXd::Ones(1, 1);
  c.G = {CoefficientField::zero(1, 1)};
  c.Gamma = {CoefficientField::zero(1, 1)};
  c.M = {MatrixXd::Zero(1, 1)};
  c.h = CoefficientField::linear(MatrixXd::Ones(1, 1));
  c.E = MatrixXd::Zero(1, 1);
  c.K = MatrixXd::Identity(1, 1);
  return StochasticSystem(std::move(c));
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{"example1", "example2", "linear-demo"};
  return names;
}

bool is_builtin(const std::string& name) {
  const auto& names = builtin_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

StochasticSystem builtin_system(const std::string& name, int n) {
  if (name == "example1") return example1(n);
  if (name == "example2") return example2(n);
  if (name == "linear-demo") return linear_demo();
  throw UsageError("unknown builtin system '" + name + "' (known: example1, example2, linear-demo)");
}

}  // namespace nlbt
