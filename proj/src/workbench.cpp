#include "nlbt/workbench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "nlbt/analysis.hpp"
#include "nlbt/builtins.hpp"
#include "nlbt/errors.hpp"

namespace nlbt {

namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

double finite(const Json& j, const std::string& what) {
  if (!j.is_number()) throw UsageError("config." + what + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw UsageError("config." + what + ": not finite");
  return v;
}

long long whole(const Json& j, const std::string& what) {
  if (!j.is_number_integer()) throw UsageError("config." + what + ": expected an integer");
  return j.get<long long>();
}

bool flag(const Json& j, const std::string& what) {
  if (!j.is_boolean()) throw UsageError("config." + what + ": expected true or false");
  return j.get<bool>();
}

void check_keys(const Json& j, std::initializer_list<const char*> known, const std::string& what) {
  if (!j.is_object()) throw UsageError("config." + what + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw UsageError("config." + what + ": unknown key '" + item.key() + "'");
  }
}

// "identity" or a matrix; identity is represented by an empty matrix.
MatrixXd matrix_or_identity(const Json& j, const std::string& what) {
  if (j.is_string()) {
    if (j.get<std::string>() != "identity") throw UsageError("config." + what + ": expected \"identity\" or a matrix");
    return {};
  }
  return matrix_from_json(j, "config." + what);
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Creates the layout on first use and records every file it writes.
class OutputTree {
 public:
  explicit OutputTree(fs::path root) : root_(std::move(root)) {}

  fs::path file(const std::string& stage, const std::string& name) {
    const fs::path dir = root_ / stage;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw UsageError("cannot create '" + dir.string() + "': " + ec.message());
    written_.push_back((fs::path(stage) / name).generic_string());
    return dir / name;
  }

  void json(const std::string& stage, const std::string& name, const Json& j) {
    write_json_file(file(stage, name).string(), j);
  }

  void csv(const std::string& name, const std::string& header, const std::vector<std::vector<double>>& rows) {
    std::ofstream out(file("plots", name), std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write plots/" + name);
    out << header << '\n';
    for (const auto& row : rows) {
      for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << csv_number(row[k]);
      out << '\n';
    }
  }

  void metadata(const std::string& command, const RunConfig& cfg) {
    Json j = Json::object();
    j["command"] = command;
    j["version"] = kVersion;
    j["timestamp_utc"] = utc_timestamp();
    j["threads"] = simulation_threads();
    j["seed"] = cfg.grid.seed;
    j["sampling_seed"] = cfg.plan.seed;
    j["tamed"] = cfg.sim.tamed;
    j["files"] = written_;
    std::error_code ec;
    fs::create_directories(root_, ec);
    write_json_file((root_ / "metadata.json").string(), j);
  }

 private:
  fs::path root_;
  std::vector<std::string> written_;
};

int exit_code_for(const Error& e) {
  if (dynamic_cast<const UsageError*>(&e) || dynamic_cast<const DimensionError*>(&e)) return kExitUsage;
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDiverged;
  return kExitCertification;
}

struct Setup {
  StochasticSystem sys;
  QuadraticCertificate cert;
};

Setup prepare(const RunConfig& cfg) {
  StochasticSystem sys = resolve_system(cfg);
  QuadraticCertificate cert = resolve_certificate(cfg, sys);
  return {std::move(sys), std::move(cert)};
}

GramianPair gramians_for(const RunConfig& cfg, const Setup& s) {
  if (cfg.user_P || cfg.user_Q) {
    if (!cfg.user_P || !cfg.user_Q) throw UsageError("config.gramians: supply both P and Q or neither");
    return user_gramians(s.sys, s.cert, *cfg.user_P, *cfg.user_Q, cfg.plan, cfg.mode);
  }
  return compute_gramians(s.sys, s.cert, cfg.plan, cfg.mode);
}

std::vector<int> orders_for(const RunConfig& cfg, int n) {
  if (!cfg.orders.empty()) return cfg.orders;
  std::vector<int> out;
  for (int r = 1; r < n; ++r) out.push_back(r);
  if (out.empty()) out.push_back(1);
  return out;
}

void write_hsv(OutputTree& tree, const VectorXd& Sigma) {
  std::vector<std::vector<double>> rows;
  for (Eigen::Index k = 0; k < Sigma.size(); ++k) rows.push_back({static_cast<double>(k + 1), Sigma(k)});
  tree.csv("hsv.csv", "k,sigma_k", rows);
}

Json symmetry_summary(const StochasticSystem& sys, bool required) {
  const auto& v = sys.validation();
  return Json{{"point_symmetric", v.point_symmetric()},
              {"method", v.symmetry_method()},
              {"required", required},
              {"bound_eligible", v.point_symmetric()}};
}

template <class Body>
int guarded(const char* name, std::ostream& log, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    log << "nlbt " << name << ": " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const Json::exception& e) {
    log << "nlbt " << name << ": malformed JSON input: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::bad_alloc&) {
    throw;
  }
}

}  // namespace

RunConfig parse_config(const Json& j, const std::string& base_dir) {
  check_keys(j,
             {"system", "system_n", "control", "grid", "certificate", "sampling", "gramians", "orders", "simulation",
              "require_symmetry", "output_dir"},
             "");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  if (j.contains("system")) {
    const Json& s = j.at("system");
    if (s.is_string()) {
      cfg.system = s.get<std::string>();
    } else if (s.is_object()) {
      cfg.system.clear();
      cfg.system_inline = s;
    } else {
      throw UsageError("config.system: expected a builtin name, a path or an inline system");
    }
  }
  if (j.contains("system_n")) {
    cfg.system_n = static_cast<int>(whole(j.at("system_n"), "system_n"));
    if (cfg.system_n < 1) throw UsageError("config.system_n: must be at least 1");
  }
  if (j.contains("control")) cfg.control = j.at("control");
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    check_keys(g, {"T", "steps", "paths", "seed", "t0"}, "grid");
    if (g.contains("T")) cfg.grid.T = finite(g.at("T"), "grid.T");
    if (g.contains("steps")) cfg.grid.steps = static_cast<int>(whole(g.at("steps"), "grid.steps"));
    if (g.contains("paths")) cfg.grid.paths = static_cast<int>(whole(g.at("paths"), "grid.paths"));
    if (g.contains("seed")) {
      if (!g.at("seed").is_number_unsigned()) throw UsageError("config.grid.seed: expected a non-negative integer");
      cfg.grid.seed = g.at("seed").get<std::uint64_t>();
    }
    if (g.contains("t0")) cfg.grid.t0 = finite(g.at("t0"), "grid.t0");
  }
  if (j.contains("certificate")) {
    const Json& c = j.at("certificate");
    check_keys(c, {"X", "delta", "calU"}, "certificate");
    if (c.contains("X")) cfg.X = matrix_or_identity(c.at("X"), "certificate.X");
    if (c.contains("delta")) cfg.delta = finite(c.at("delta"), "certificate.delta");
    if (c.contains("calU")) cfg.calU = matrix_or_identity(c.at("calU"), "certificate.calU");
  }
  if (j.contains("sampling")) {
    const Json& s = j.at("sampling");
    check_keys(s, {"pairs", "seed", "radii", "force"}, "sampling");
    if (s.contains("pairs")) cfg.plan.pairs = static_cast<int>(whole(s.at("pairs"), "sampling.pairs"));
    if (s.contains("seed")) {
      if (!s.at("seed").is_number_unsigned()) throw UsageError("config.sampling.seed: expected a non-negative integer");
      cfg.plan.seed = s.at("seed").get<std::uint64_t>();
    }
    if (s.contains("radii")) {
      const VectorXd r = vector_from_json(s.at("radii"), "config.sampling.radii");
      cfg.plan.radii.assign(r.data(), r.data() + r.size());
    }
    if (s.contains("force")) cfg.plan.force_sampling = flag(s.at("force"), "sampling.force");
  }
  if (j.contains("gramians")) {
    const Json& g = j.at("gramians");
    check_keys(g, {"mode", "P", "Q"}, "gramians");
    if (g.contains("mode")) {
      const std::string m = g.at("mode").is_string() ? g.at("mode").get<std::string>() : "";
      if (m == "full") {
        cfg.mode = GramianMode::Full;
      } else if (m == "simplified") {
        cfg.mode = GramianMode::Simplified;
      } else {
        throw UsageError("config.gramians.mode: expected \"full\" or \"simplified\"");
      }
    }
    if (g.contains("P")) cfg.user_P = matrix_from_json(g.at("P"), "config.gramians.P");
    if (g.contains("Q")) cfg.user_Q = matrix_from_json(g.at("Q"), "config.gramians.Q");
  }
  if (j.contains("orders")) {
    const Json& o = j.at("orders");
    if (o.is_array()) {
      for (const auto& r : o) cfg.orders.push_back(static_cast<int>(whole(r, "orders[]")));
    } else if (o.is_object()) {
      check_keys(o, {"policy", "value", "r"}, "orders");
      const std::string p = o.contains("policy") && o.at("policy").is_string() ? o.at("policy").get<std::string>() : "";
      if (p == "tolerance") {
        cfg.policy = OrderPolicy::tolerance(finite(o.at("value"), "orders.value"));
      } else if (p == "energy") {
        cfg.policy = OrderPolicy::energy(finite(o.at("value"), "orders.value"));
      } else if (p == "fixed") {
        cfg.policy = OrderPolicy::fixed(static_cast<int>(whole(o.at("r"), "orders.r")));
      } else {
        throw UsageError("config.orders.policy: expected \"tolerance\", \"energy\" or \"fixed\"");
      }
    } else {
      throw UsageError("config.orders: expected a list of orders or a policy object");
    }
  }
  if (j.contains("simulation")) {
    const Json& s = j.at("simulation");
    check_keys(s, {"tamed", "batches", "trajectories", "x0", "explosion_threshold"}, "simulation");
    if (s.contains("tamed")) cfg.sim.tamed = flag(s.at("tamed"), "simulation.tamed");
    if (s.contains("batches")) cfg.sim.batches = static_cast<int>(whole(s.at("batches"), "simulation.batches"));
    if (s.contains("trajectories")) cfg.sim.keep_trajectories = flag(s.at("trajectories"), "simulation.trajectories");
    if (s.contains("x0")) cfg.x0 = vector_from_json(s.at("x0"), "config.simulation.x0");
    if (s.contains("explosion_threshold")) {
      cfg.sim.explosion_threshold = finite(s.at("explosion_threshold"), "simulation.explosion_threshold");
    }
  }
  if (j.contains("require_symmetry")) cfg.require_symmetry = flag(j.at("require_symmetry"), "require_symmetry");
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw UsageError("config.output_dir: expected a path");
    cfg.output_dir = j.at("output_dir").get<std::string>();
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file '" + path + "' does not exist");
  const fs::path parent = fs::path(path).parent_path();
  return parse_config(read_json_file(path), parent.empty() ? "." : parent.string());
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.seed) cfg.grid.seed = *o.seed;
  if (o.paths) cfg.grid.paths = *o.paths;
  if (o.orders) cfg.orders = *o.orders;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.system) {
    cfg.system = *o.system;
    cfg.system_inline = Json();
    cfg.base_dir = ".";
  }
  if (o.require_symmetry) cfg.require_symmetry = true;
}

std::vector<int> parse_orders(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  auto to_int = [&text](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw UsageError("--orders: cannot parse '" + text + "'");
    return v;
  };
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-', 1);
    if (dash != std::string::npos) {
      const int lo = to_int(item.substr(0, dash));
      const int hi = to_int(item.substr(dash + 1));
      if (hi < lo) throw UsageError("--orders: empty range '" + item + "'");
      for (int r = lo; r <= hi; ++r) out.push_back(r);
    } else {
      out.push_back(to_int(item));
    }
  }
  if (out.empty()) throw UsageError("--orders: no orders given");
  return out;
}

StochasticSystem resolve_system(const RunConfig& cfg) {
  if (!cfg.system_inline.is_null()) return system_from_json(cfg.system_inline);
  if (is_builtin(cfg.system)) return builtin_system(cfg.system, cfg.system_n);
  fs::path p(cfg.system);
  if (p.is_relative() && !fs::exists(p)) p = fs::path(cfg.base_dir) / p;
  if (!fs::exists(p)) {
    throw UsageError("system '" + cfg.system + "' is neither a builtin (example1, example2, linear-demo) nor an existing file");
  }
  return system_from_json(read_json_file(p.string()));
}

QuadraticCertificate resolve_certificate(const RunConfig& cfg, const StochasticSystem& sys) {
  QuadraticCertificate cert = QuadraticCertificate::identity(sys.n(), sys.m(), cfg.delta);
  if (cfg.X.size() > 0) cert.X = cfg.X;
  if (cfg.calU.size() > 0) cert.calU = cfg.calU;
  cert.validate(sys.n(), sys.m());
  return cert;
}

ControlSignal resolve_control(const RunConfig& cfg, const StochasticSystem& sys) {
  const double horizon = cfg.grid.t0 + cfg.grid.T;
  if (cfg.control.is_null()) {
    return ControlSignal::sinusoid(VectorXd::Ones(sys.m()), VectorXd::Constant(sys.m(), std::numbers::pi), horizon);
  }
  ControlSignal u = control_from_json(cfg.control, sys.m(), horizon);
  if (u.horizon() < horizon) throw UsageError("config.control.horizon: shorter than the simulation grid");
  return u;
}

int cmd_certify(const RunConfig& cfg, std::ostream& log) {
  return guarded("certify", log, [&] {
    const Setup s = prepare(cfg);
    OutputTree tree(cfg.output_dir);
    Json summary = Json::object();
    summary["system_validation"] = to_json(s.sys.validation());
    summary["symmetry"] = symmetry_summary(s.sys, cfg.require_symmetry);

    GramianPair gp;
    try {
      gp = gramians_for(cfg, s);
    } catch (const Error& e) {
      if (exit_code_for(e) == kExitUsage) throw;
      summary["pass"] = false;
      summary["failure"] = e.what();
      tree.json("certify", "summary.json", summary);
      tree.metadata("certify", cfg);
      log << "nlbt certify: " << e.what() << '\n';
      return static_cast<int>(kExitCertification);
    }
    tree.json("certify", "reach.json", to_json(gp.reach_report));
    tree.json("certify", "obs.json", to_json(gp.obs_report));
    tree.json("gramians", "gramians.json", to_json(gp));
    const bool pass = gp.reach_report.pass && gp.obs_report.pass;
    summary["provenance"] = gp.provenance;
    summary["lipschitz_data"] = gp.lip ? to_json(*gp.lip) : Json(nullptr);
    summary["pass"] = pass;
    tree.json("certify", "summary.json", summary);
    tree.metadata("certify", cfg);

    log << "certify: reach " << (gp.reach_report.pass ? "pass" : "FAIL") << " (" << gp.reach_report.method
        << ", max residual " << gp.reach_report.max_residual << "), obs " << (gp.obs_report.pass ? "pass" : "FAIL")
        << " (" << gp.obs_report.method << ", max residual " << gp.obs_report.max_residual << ")\n";
    if (cfg.require_symmetry && !s.sys.validation().point_symmetric()) {
      log << "certify: coefficients are not point symmetric; the error bound will be refused\n";
    }
    return static_cast<int>(pass ? kExitOk : kExitCertification);
  });
}

int cmd_reduce(const RunConfig& cfg, std::ostream& log) {
  return guarded("reduce", log, [&] {
    const Setup s = prepare(cfg);
    const GramianPair gp = gramians_for(cfg, s);
    const BalancedRealization bal = balance(s.sys, gp);
    std::vector<int> orders = cfg.orders;
    if (orders.empty()) {
      orders.push_back(cfg.policy ? select_order(bal.Sigma, *cfg.policy) : std::max(1, s.sys.n() / 2));
    }
    std::vector<ReducedSystem> reduced;
    for (int r : orders) reduced.push_back(truncate(bal, r));

    OutputTree tree(cfg.output_dir);
    tree.json("gramians", "gramians.json", to_json(gp));
    tree.json("balance", "balanced.json", to_json(bal));
    for (const auto& red : reduced) tree.json("balance", "reduced_r" + std::to_string(red.r) + ".json", to_json(red));
    write_hsv(tree, bal.Sigma);
    tree.metadata("reduce", cfg);

    log << "reduce: Hankel singular values";
    for (Eigen::Index k = 0; k < bal.Sigma.size(); ++k) log << ' ' << bal.Sigma(k);
    log << "\nreduce: wrote orders";
    for (int r : orders) log << ' ' << r;
    log << '\n';
    return static_cast<int>(kExitOk);
  });
}

int cmd_validate(const RunConfig& cfg, std::ostream& log) {
  return guarded("validate", log, [&] {
    cfg.grid.validate();
    const Setup s = prepare(cfg);
    const ControlSignal u = resolve_control(cfg, s.sys);
    const std::vector<int> orders = orders_for(cfg, s.sys.n());
    const GramianPair gp = gramians_for(cfg, s);

    ValidationOptions opts;
    opts.sim = cfg.sim;
    opts.reduced_plan = cfg.plan;
    const ReductionValidation v = validate_reduction(s.sys, gp, u, cfg.grid, orders, opts);

    OutputTree tree(cfg.output_dir);
    tree.json("gramians", "gramians.json", to_json(gp));
    Json report = to_json(v);
    report["control"] = to_json(u);
    report["grid"] = Json{{"T", cfg.grid.T},
                          {"steps", cfg.grid.steps},
                          {"paths", cfg.grid.paths},
                          {"seed", cfg.grid.seed},
                          {"t0", cfg.grid.t0}};
    report["tamed"] = cfg.sim.tamed;
    tree.json("validate", "validation.json", report);
    std::vector<std::vector<double>> rows;
    for (const auto& r : v.reports) {
      rows.push_back({static_cast<double>(r.r), r.hsv_tail, r.applicable ? r.bound_value : std::nan(""),
                      r.mc_error.value, r.mc_error.se});
    }
    tree.csv("validation.csv", "r,hsv_tail,bound,mc_error,stderr", rows);
    write_hsv(tree, v.Sigma);
    tree.metadata("validate", cfg);

    for (const auto& w : v.warnings) log << "validate: warning: " << w << '\n';
    for (const auto& r : v.reports) {
      log << "validate: r = " << r.r << "  mc_error " << r.mc_error.value << " (se " << r.mc_error.se << ")  bound ";
      if (r.applicable) {
        log << r.bound_value << (r.satisfied ? "  ok" : "  VIOLATED");
      } else {
        log << "not applicable";
      }
      log << '\n';
    }
    for (const auto& f : v.findings) log << "validate: finding: " << f << '\n';
    if (!v.applicable) {
      log << "validate: " << v.symmetry_note << '\n';
      return static_cast<int>(kExitCertification);
    }
    return static_cast<int>(v.all_satisfied ? kExitOk : kExitBoundViolated);
  });
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  return guarded("simulate", log, [&] {
    cfg.grid.validate();
    const Setup s = prepare(cfg);
    const ControlSignal u = resolve_control(cfg, s.sys);
    const VectorXd x0 = cfg.x0.value_or(VectorXd::Zero(s.sys.n()));
    if (x0.size() != s.sys.n()) throw DimensionError("config.simulation.x0: expected " + std::to_string(s.sys.n()) + " entries");
    const SimulationResult res = simulate(s.sys, u, x0, cfg.grid, cfg.sim);

    OutputTree tree(cfg.output_dir);
    Json j = Json::object();
    j["l2T_norm_sq"] = to_json(res.l2T_norm_sq);
    j["final_output_mean_sq"] = to_json(Estimate{res.output_mean_sq.mean(res.output_mean_sq.mean.size() - 1),
                                                 res.output_mean_sq.se(res.output_mean_sq.se.size() - 1)});
    j["final_state_second_moment"] = to_json(Estimate{res.state_second_moment.mean(res.state_second_moment.mean.size() - 1),
                                                      res.state_second_moment.se(res.state_second_moment.se.size() - 1)});
    j["paths"] = res.paths;
    j["flagged"] = res.flagged;
    j["batches"] = res.batches;
    j["tamed"] = res.tamed;
    j["control"] = to_json(u);
    j["x0"] = vector_to_json(x0);
    j["grid"] = Json{{"T", cfg.grid.T},
                     {"steps", cfg.grid.steps},
                     {"paths", cfg.grid.paths},
                     {"seed", cfg.grid.seed},
                     {"t0", cfg.grid.t0}};
    tree.json("simulate", "summary.json", j);
    std::vector<std::vector<double>> rows;
    for (Eigen::Index k = 0; k < res.t.size(); ++k) {
      rows.push_back({res.t(k), res.output_mean_sq.mean(k), res.output_mean_sq.se(k)});
    }
    tree.csv("simulation.csv", "t,estimate,stderr", rows);
    if (cfg.sim.keep_trajectories) {
      write_trajectories(tree.file("simulate", "trajectories.bin").string(), res, s.sys.n(), cfg.grid.steps);
    }
    tree.metadata("simulate", cfg);
    log << "simulate: E int |y|^2 dt = " << res.l2T_norm_sq.value << " (se " << res.l2T_norm_sq.se << "), "
        << res.flagged << " of " << res.paths << " paths flagged\n";
    return static_cast<int>(kExitOk);
  });
}

int run_command(const std::string& name, const RunConfig& cfg, std::ostream& log) {
  if (name == "certify") return cmd_certify(cfg, log);
  if (name == "reduce") return cmd_reduce(cfg, log);
  if (name == "validate") return cmd_validate(cfg, log);
  if (name == "simulate") return cmd_simulate(cfg, log);
  log << "nlbt: unknown command '" << name << "' (expected certify, reduce, validate or simulate)\n";
  return kExitUsage;
}

}  // namespace nlbt
