#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nlbt/builtins.hpp"
#include "nlbt/errors.hpp"
#include "nlbt/workbench.hpp"

using namespace nlbt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("nlbt_wb_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig quick(const std::string& system, const std::string& out, int n = 3) {
  RunConfig cfg;
  cfg.system = system;
  cfg.system_n = n;
  cfg.grid = {1.0, 100, 200, 7, 0.0};
  cfg.plan.pairs = 1000;
  cfg.output_dir = scratch(out).string();
  return cfg;
}

}  // namespace

TEST(Config, ParsesFullDocument) {
  const Json j = Json::parse(R"({
    "system": "example1", "system_n": 4,
    "control": {"kind": "sinusoid", "params": {"amplitudes": [1.0], "frequencies": [2.0]}},
    "grid": {"T": 1.5, "steps": 300, "paths": 50, "seed": 9},
    "certificate": {"X": "identity", "delta": 2.0, "calU": [[1.0]]},
    "sampling": {"pairs": 200, "seed": 5, "radii": [0.5, 2.0]},
    "gramians": {"mode": "simplified"},
    "orders": [1, 2],
    "simulation": {"tamed": true, "batches": 10},
    "require_symmetry": true,
    "output_dir": "out"
  })");
  const RunConfig cfg = parse_config(j);
  EXPECT_EQ(cfg.system, "example1");
  EXPECT_EQ(cfg.system_n, 4);
  EXPECT_EQ(cfg.grid.T, 1.5);
  EXPECT_EQ(cfg.grid.steps, 300);
  EXPECT_EQ(cfg.grid.paths, 50);
  EXPECT_EQ(cfg.grid.seed, 9u);
  EXPECT_EQ(cfg.delta, 2.0);
  EXPECT_EQ(cfg.plan.pairs, 200);
  EXPECT_EQ(cfg.plan.seed, 5u);
  EXPECT_EQ(cfg.plan.radii, (std::vector<double>{0.5, 2.0}));
  EXPECT_EQ(cfg.mode, GramianMode::Simplified);
  EXPECT_EQ(cfg.orders, (std::vector<int>{1, 2}));
  EXPECT_TRUE(cfg.sim.tamed);
  EXPECT_EQ(cfg.sim.batches, 10);
  EXPECT_TRUE(cfg.require_symmetry);
  const StochasticSystem s = resolve_system(cfg);
  EXPECT_EQ(s.n(), 4);
  EXPECT_EQ(resolve_control(cfg, s).kind(), ControlKind::Sinusoid);
  EXPECT_EQ(resolve_certificate(cfg, s).delta, 2.0);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(parse_config(Json::parse(R"({"sytem": "example1"})")), UsageError);
  EXPECT_THROW(parse_config(Json::parse(R"({"grid": {"dt": 0.1}})")), UsageError);
  EXPECT_THROW(parse_config(Json::parse(R"({"grid": {"seed": -1}})")), UsageError);
  EXPECT_THROW(parse_config(Json::parse(R"({"gramians": {"mode": "half"}})")), UsageError);
  EXPECT_THROW(parse_config(Json::parse(R"({"orders": {"policy": "magic"}})")), UsageError);
}

TEST(Config, PolicyObject) {
  const RunConfig cfg = parse_config(Json::parse(R"({"orders": {"policy": "tolerance", "value": 0.5}})"));
  ASSERT_TRUE(cfg.policy.has_value());
  EXPECT_TRUE(cfg.orders.empty());
}

TEST(Config, OverridesWin) {
  RunConfig cfg;
  Overrides o;
  o.seed = 99;
  o.paths = 12;
  o.orders = std::vector<int>{2};
  o.system = "linear-demo";
  o.require_symmetry = true;
  apply_overrides(cfg, o);
  EXPECT_EQ(cfg.grid.seed, 99u);
  EXPECT_EQ(cfg.grid.paths, 12);
  EXPECT_EQ(cfg.orders, (std::vector<int>{2}));
  EXPECT_EQ(cfg.system, "linear-demo");
  EXPECT_TRUE(cfg.require_symmetry);
}

TEST(Config, OrderLists) {
  EXPECT_EQ(parse_orders("1,3"), (std::vector<int>{1, 3}));
  EXPECT_EQ(parse_orders("2-4"), (std::vector<int>{2, 3, 4}));
  EXPECT_THROW(parse_orders("x"), UsageError);
  EXPECT_THROW(parse_orders("1,,2"), UsageError);
}

TEST(Config, MissingFile) { EXPECT_THROW(load_config("/nonexistent/nlbt.json"), UsageError); }

TEST(SystemJson, RoundTrip) {
  for (const auto& name : builtin_names()) {
    const StochasticSystem s = builtin_system(name, 3);
    const Json j = to_json(s);
    const StochasticSystem back = system_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump()) << name;
    const VectorXd x = VectorXd::LinSpaced(s.n(), -1.0, 1.5);
    EXPECT_EQ(back.f()(x), s.f()(x));
    EXPECT_EQ(back.h()(x), s.h()(x));
  }
}

TEST(SystemJson, StrictAndDefaults) {
  const Json minimal = Json::parse(R"({
    "dims": {"n": 1, "p": 1},
    "f": {"kind": "linear", "params": {"matrix": [[-1.0]]}},
    "h": {"kind": "linear", "params": {"matrix": [[1.0]]}}
  })");
  const StochasticSystem s = system_from_json(minimal);
  EXPECT_EQ(s.m(), 0);
  EXPECT_EQ(s.q(), 0);
  Json bad = minimal;
  bad["extra"] = 1;
  EXPECT_THROW(system_from_json(bad), UsageError);
}

TEST(Commands, CertifyExample1) {
  const RunConfig cfg = quick("example1", "certify");
  std::ostringstream log;
  EXPECT_EQ(cmd_certify(cfg, log), kExitOk) << log.str();
  const fs::path root(cfg.output_dir);
  EXPECT_TRUE(fs::exists(root / "certify" / "summary.json"));
  EXPECT_TRUE(fs::exists(root / "gramians" / "gramians.json"));
  EXPECT_TRUE(fs::exists(root / "metadata.json"));
  const Json reach = read_json_file((root / "certify" / "reach.json").string());
  EXPECT_TRUE(reach.at("pass").get<bool>());
}

TEST(Commands, LinearDemoHsv) {
  RunConfig cfg = quick("linear-demo", "lindemo");
  std::ostringstream log;
  ASSERT_EQ(cmd_reduce(cfg, log), kExitOk) << log.str();
  const Json bal = read_json_file((fs::path(cfg.output_dir) / "balance" / "balanced.json").string());
  EXPECT_NEAR(bal.at("Sigma").at(0).get<double>(), 0.5, 1e-12);
}

TEST(Commands, FullOrderReductionKeepsDimensions) {
  RunConfig cfg = quick("example1", "fullorder");
  cfg.orders = {3};
  std::ostringstream log;
  ASSERT_EQ(cmd_reduce(cfg, log), kExitOk) << log.str();
  const fs::path root(cfg.output_dir);
  const Json red = read_json_file((root / "balance" / "reduced_r3.json").string());
  const Json bal = read_json_file((root / "balance" / "balanced.json").string());
  EXPECT_EQ(red.at("dims"), bal.at("dims"));
}

TEST(Commands, ExitCodes) {
  std::ostringstream log;
  RunConfig zero = quick("example1", "zeropaths");
  zero.grid.paths = 0;
  EXPECT_EQ(cmd_validate(zero, log), kExitUsage);
  EXPECT_EQ(run_command("frobnicate", quick("example1", "unknown"), log), kExitUsage);
  RunConfig bogus = quick("no-such-system.json", "nosys");
  EXPECT_EQ(cmd_certify(bogus, log), kExitUsage);

  RunConfig asym = quick("example2", "asym");
  asym.grid.paths = 40;
  asym.orders = {1};
  EXPECT_EQ(cmd_validate(asym, log), kExitCertification);
  const Json v = read_json_file((fs::path(asym.output_dir) / "validate" / "validation.json").string());
  EXPECT_FALSE(v.dump().find("not applicable") == std::string::npos);
}

TEST(Commands, ByteIdenticalReruns) {
  RunConfig a = quick("example1", "rerun_a");
  a.orders = {1, 2};
  RunConfig b = a;
  b.output_dir = scratch("rerun_b").string();
  std::ostringstream log;
  ASSERT_EQ(cmd_validate(a, log), kExitOk) << log.str();
  ASSERT_EQ(cmd_validate(b, log), kExitOk) << log.str();
  for (const char* rel : {"validate/validation.json", "gramians/gramians.json", "plots/validation.csv"}) {
    const std::string x = slurp(fs::path(a.output_dir) / rel);
    EXPECT_FALSE(x.empty()) << rel;
    EXPECT_EQ(x, slurp(fs::path(b.output_dir) / rel)) << rel;
  }
}
