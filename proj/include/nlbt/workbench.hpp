#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nlbt/balancing.hpp"
#include "nlbt/gramians.hpp"
#include "nlbt/lyapunov.hpp"
#include "nlbt/serialization.hpp"
#include "nlbt/simulation.hpp"

namespace nlbt {

/// Exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitCertification = 2,  // also: bound refused for lack of point symmetry
  kExitBoundViolated = 3,
  kExitDiverged = 4,
};

struct RunConfig {
  /// Builtin name, path to a system file, or empty when `system_inline` is set.
  std::string system = "example1";
  Json system_inline;
  int system_n = 6;
  std::string base_dir = ".";  // for relative system paths

  Json control;  // null: unit sinusoid at frequency pi on every channel
  SimGrid grid{2.0, 2000, 10000, 1, 0.0};

  // Certificate; empty matrices mean identity.
  MatrixXd X;
  double delta = 1.0;
  MatrixXd calU;

  SamplingPlan plan;
  GramianMode mode = GramianMode::Full;
  std::optional<MatrixXd> user_P;
  std::optional<MatrixXd> user_Q;

  std::vector<int> orders;            // empty: 1..n-1
  std::optional<OrderPolicy> policy;  // reduce only, when orders is empty

  SimOptions sim;
  std::optional<VectorXd> x0;  // simulate only; default 0
  bool require_symmetry = false;
  std::string output_dir = "nlbt-out";
};

/// Strict parse: unknown keys and non-finite numbers are usage errors.
RunConfig parse_config(const Json& j, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> paths;
  std::optional<std::vector<int>> orders;
  std::optional<std::string> output_dir;
  std::optional<std::string> system;
  bool require_symmetry = false;
};

void apply_overrides(RunConfig& cfg, const Overrides& o);

/// Parses "1,2,3" and ranges such as "1-5".
std::vector<int> parse_orders(const std::string& text);

StochasticSystem resolve_system(const RunConfig& cfg);
QuadraticCertificate resolve_certificate(const RunConfig& cfg, const StochasticSystem& sys);
ControlSignal resolve_control(const RunConfig& cfg, const StochasticSystem& sys);

// Each command writes under cfg.output_dir, logs to `log` and returns an
// exit code. JSON outputs depend only on the config; timestamps go to
// metadata.json.
int cmd_certify(const RunConfig& cfg, std::ostream& log);
int cmd_reduce(const RunConfig& cfg, std::ostream& log);
int cmd_validate(const RunConfig& cfg, std::ostream& log);
int cmd_simulate(const RunConfig& cfg, std::ostream& log);

/// Dispatch by name; unknown commands are usage errors.
int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log);

}  // namespace nlbt
