// Command-line front end: scenario validation, simulation, parameter
// optimization, and the bundled experiment harnesses.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pm/cli.hpp"
#include "pm/parallel.hpp"

int main(int argc, char** argv) {
  CLI::App app{"persistent monitoring of mobile targets: simulate and optimize"};
  app.require_subcommand(1);

  std::string path;
  std::string output = "out";
  std::string kind;
  pm::CliOverrides ov;
  double step = 0.0;
  std::uint64_t seed = 0;
  int max_iters = 0;

  auto add_common = [&](CLI::App* cmd, bool with_output) {
    cmd->add_option("scenario", path, "scenario file (JSON)")->required();
    if (with_output) cmd->add_option("-o,--output", output, "output directory");
    cmd->add_option("--step", step, "override integration step");
    cmd->add_option("--seed", seed, "override seeds");
    cmd->add_option("--threads", ov.threads, "worker threads (0 = auto)");
  };

  CLI::App* validate = app.add_subcommand("validate", "parse a scenario and report assumption checks");
  validate->add_option("scenario", path, "scenario file (JSON)")->required();

  CLI::App* sim = app.add_subcommand("simulate", "run one simulation, write states/events/summary");
  add_common(sim, true);

  CLI::App* opt = app.add_subcommand("optimize", "gradient descent on the controller parameters");
  add_common(opt, true);
  opt->add_option("--max-iters", max_iters, "override optimizer iteration cap");
  opt->add_flag("--grad-check", ov.grad_check,
                "compare IPA gradients against central differences at every iterate");

  CLI::App* exp = app.add_subcommand("experiment", "run a bundled experiment harness");
  exp->add_option("kind", kind, "static | deadzone | noise")->required();
  add_common(exp, true);
  exp->add_option("--max-iters", max_iters, "override optimizer iteration cap");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (step > 0.0) ov.step = step;
  if (seed > 0) ov.seed = seed;
  if (max_iters > 0) ov.max_iters = max_iters;

  if (validate->parsed()) return pm::cmd_validate(path, std::cout, std::cerr);
  if (sim->parsed()) return pm::cmd_simulate(path, output, ov, std::cout, std::cerr);
  if (opt->parsed()) return pm::cmd_optimize(path, output, ov, std::cout, std::cerr);
  if (exp->parsed()) return pm::cmd_experiment(kind, path, output, ov, std::cout, std::cerr);
  return 1;
}
