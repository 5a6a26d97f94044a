// nlbt certify|reduce|validate|simulate --config <file> [options]

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "nlbt/errors.hpp"
#include "nlbt/workbench.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Balanced truncation workbench for nonlinear stochastic systems"};
  app.require_subcommand(1);

  std::string config_path;
  std::uint64_t seed = 0;
  int paths = 0;
  std::string orders;
  std::string out_dir;
  std::string system;
  bool require_symmetry = false;

  const char* commands[][2] = {
      {"certify", "certify the Gramian inequalities"},
      {"reduce", "compute Gramians, balance and truncate"},
      {"validate", "compare Monte Carlo reduction errors with the error bound"},
      {"simulate", "Monte Carlo simulation of the full system"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "run configuration (JSON)");
    sub->add_option("--seed", seed, "simulation seed");
    sub->add_option("--paths", paths, "number of Monte Carlo paths");
    sub->add_option("--orders", orders, "truncation orders, e.g. 1,2,3 or 1-5");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--system", system, "builtin name or system file (overrides the config)");
    sub->add_flag("--require-symmetry", require_symmetry, "record that the error bound needs point symmetry");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nlbt::kExitUsage;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  const CLI::App& sub = *app.get_subcommands().front();

  nlbt::RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = nlbt::load_config(config_path);
    nlbt::Overrides o;
    if (sub.count("--seed")) o.seed = seed;
    if (sub.count("--paths")) o.paths = paths;
    if (sub.count("--orders")) o.orders = nlbt::parse_orders(orders);
    if (sub.count("--out")) o.output_dir = out_dir;
    if (sub.count("--system")) o.system = system;
    o.require_symmetry = require_symmetry;
    nlbt::apply_overrides(cfg, o);
  } catch (const nlbt::Error& e) {
    std::cerr << "nlbt " << command << ": " << e.what() << '\n';
    return nlbt::kExitUsage;
  }
  return nlbt::run_command(command, cfg, std::cerr);
}
