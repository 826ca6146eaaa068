#ifndef PM_CLI_HPP
#define PM_CLI_HPP

#include <iosfwd>
#include <optional>
#include <string>

#include "pm/controllers.hpp"
#include "pm/model.hpp"
#include "pm/optimizer.hpp"
#include "pm/simulator.hpp"

namespace pm {

/// Parsed scenario document: the full problem instance plus controller,
/// simulator, optimizer, and experiment configuration.
struct ScenarioFile {
  Scenario scenario;
  ControllerParams params;
  SimOptions sim_options;
  DescentConfig optimizer;  // optimizer.sim mirrors sim_options

  struct ExperimentConfig {
    std::size_t repetitions = 50;
    std::size_t phases = 4;
    std::uint64_t seed = 7;
    NoiseModel noise;
  };
  ExperimentConfig experiment;
};

class ScenarioParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses a scenario document; errors carry the offending field path (or the
/// line/column for malformed JSON). A "random" controller block is resolved
/// into concrete parameters here, so serialization is always explicit.
ScenarioFile load_scenario_file(const std::string& path);
ScenarioFile parse_scenario_text(const std::string& text, const std::string& origin = "<string>");

std::string serialize_scenario_file(const ScenarioFile& file);
void save_scenario_file(const ScenarioFile& file, const std::string& path);

/// Shortest round-trip decimal representation (CSV cells, byte-stable files).
std::string format_double(double v);

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> step;
  std::optional<int> max_iters;
  std::optional<std::string> output_dir;
  bool grad_check = false;
  int threads = 0;
};

// exit codes: 0 success, 1 usage/parse error, 2 runtime failure
int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err);
int cmd_simulate(const std::string& path, const std::string& output_dir,
                 const CliOverrides& overrides, std::ostream& out, std::ostream& err);
int cmd_optimize(const std::string& path, const std::string& output_dir,
                 const CliOverrides& overrides, std::ostream& out, std::ostream& err);
int cmd_experiment(const std::string& kind, const std::string& path,
                   const std::string& output_dir, const CliOverrides& overrides,
                   std::ostream& out, std::ostream& err);

}  // namespace pm

#endif  // PM_CLI_HPP
