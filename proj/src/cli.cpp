#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>

#include <json.hpp>

#include "pm/canonical.hpp"
#include "pm/cli.hpp"
#include "pm/ipa.hpp"
#include "pm/oracle.hpp"

namespace pm {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void apply_overrides(ScenarioFile& file, const CliOverrides& o) {
  if (o.step) {
    file.sim_options.step = *o.step;
    file.optimizer.sim.step = *o.step;
  }
  if (o.max_iters) file.optimizer.max_iterations = *o.max_iters;
  if (o.seed) {
    file.optimizer.seed = *o.seed;
    file.experiment.seed = *o.seed;
    if (file.sim_options.noise) {
      file.sim_options.noise->seed = *o.seed;
      file.optimizer.sim.noise = file.sim_options.noise;
    }
  }
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

void write_states_csv(const fs::path& p, const SimOutput& sim) {
  auto f = open_out(p);
  const std::size_t N = sim.agent_positions.size();
  const std::size_t M = sim.uncertainties.size();
  f << "time";
  for (std::size_t j = 1; j <= N; ++j) f << ",s_" << j;
  for (std::size_t i = 1; i <= M; ++i) f << ",R_" << i;
  for (std::size_t j = 1; j <= N; ++j) f << ",u_" << j;
  for (std::size_t i = 1; i <= M; ++i) f << ",theta_" << i;
  f << "\n";
  for (std::size_t k = 0; k < sim.times.size(); ++k) {
    f << format_double(sim.times[k]);
    for (std::size_t j = 0; j < N; ++j) f << "," << format_double(sim.agent_positions[j][k]);
    for (std::size_t i = 0; i < M; ++i) f << "," << format_double(sim.uncertainties[i][k]);
    for (std::size_t j = 0; j < N; ++j) f << "," << format_double(sim.controls[j][k]);
    for (std::size_t i = 0; i < M; ++i) f << "," << format_double(sim.target_positions[i][k]);
    f << "\n";
  }
}

void write_events_csv(const fs::path& p, const SimOutput& sim) {
  auto f = open_out(p);
  f << "time,kind,agent_index,target_index,phase_index\n";
  for (const Event& e : sim.events) {
    f << format_double(e.time) << "," << to_string(e.kind) << ",";
    if (e.agent >= 0) f << e.agent;
    f << ",";
    if (e.target >= 0) f << e.target;
    f << ",";
    if (e.phase >= 0) f << e.phase;
    f << "\n";
  }
}

json summary_json(const ScenarioFile& file, const SimOutput& sim) {
  json s;
  s["cost"] = sim.cost;
  s["event_count"] = sim.events.size();
  s["samples"] = sim.times.size();
  s["config"] = json::parse(serialize_scenario_file(file));
  return s;
}

int guard(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ScenarioParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace

int cmd_validate(const std::string& path, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() -> int {
    const ScenarioFile file = load_scenario_file(path);
    out << "parse: ok (" << file.scenario.num_agents() << " agents, "
        << file.scenario.num_targets() << " targets, horizon "
        << format_double(file.scenario.horizon) << ")\n";
    const AssumptionReport rep = validate_assumptions(file.scenario, 1e-3 * file.scenario.horizon);
    out << "max target speed: " << format_double(rep.max_target_speed)
        << (rep.speed_ok ? " (ok)" : " (exceeds agent speed bound)") << "\n";
    if (file.scenario.num_targets() > 1)
      out << "min target separation: " << format_double(rep.min_separation) << " at t="
          << format_double(rep.min_separation_time)
          << (rep.separation_ok ? " (ok)" : " (below 2*max_range + margin)") << "\n";
    for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
    const auto violations = validate_params(file.params, file.scenario);
    for (const auto& v : violations) out << "parameter violation: " << v.where << ": " << v.what << "\n";
    return violations.empty() ? 0 : 1;
  });
}

int cmd_simulate(const std::string& path, const std::string& output_dir,
                 const CliOverrides& overrides, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() -> int {
    ScenarioFile file = load_scenario_file(path);
    apply_overrides(file, overrides);
    fs::create_directories(output_dir);
    const SimOutput sim = simulate(file.scenario, file.params, file.sim_options);
    write_states_csv(fs::path(output_dir) / "states.csv", sim);
    write_events_csv(fs::path(output_dir) / "events.csv", sim);
    auto f = open_out(fs::path(output_dir) / "summary.json");
    f << summary_json(file, sim).dump(2) << "\n";
    out << "J = " << format_double(sim.cost) << ", " << sim.events.size() << " events, "
        << sim.times.size() << " samples -> " << output_dir << "\n";
    return 0;
  });
}

int cmd_optimize(const std::string& path, const std::string& output_dir,
                 const CliOverrides& overrides, std::ostream& out, std::ostream& err) {
  return guard(err, [&]() -> int {
    ScenarioFile file = load_scenario_file(path);
    apply_overrides(file, overrides);
    fs::create_directories(output_dir);

    const OptimizeResult res = optimize(file.scenario, file.params, file.optimizer);

    auto f = open_out(fs::path(output_dir) / "iterates.csv");
    f << "iteration,J,grad_norm,step,backtracks";
    if (overrides.grad_check) f << ",fd_max_rel_err,fd_compared";
    f << "\n";
    for (const IterateRecord& rec : res.iterates) {
      f << rec.iteration << "," << format_double(rec.cost) << ","
        << format_double(rec.gradient_norm) << "," << format_double(rec.step_length) << ","
        << rec.backtracks;
      if (overrides.grad_check) {
        const auto fd = finite_diff_gradient(file.scenario, rec.params, 1e-5,
                                             file.optimizer.sim, overrides.threads);
        const auto ipa = simulate_with_sensitivities(file.scenario, rec.params,
                                                     file.optimizer.sim);
        double worst = 0.0;
        std::size_t compared = 0;
        for (std::size_t d = 0; d < fd.gradient.size(); ++d) {
          if (!fd.comparable[d]) continue;
          ++compared;
          const double scale = std::max({1e-6, std::abs(fd.gradient[d]),
                                         std::abs(ipa.report.gradient[d])});
          worst = std::max(worst, std::abs(fd.gradient[d] - ipa.report.gradient[d]) / scale);
        }
        f << "," << format_double(worst) << "," << compared;
      }
      f << "\n";
    }

    ScenarioFile snapshot = file;
    snapshot.params = res.params;
    save_scenario_file(snapshot, (fs::path(output_dir) / "final_scenario.json").string());
    out << "J: " << format_double(res.iterates.front().cost) << " -> "
        << format_double(res.cost) << " in " << (res.iterates.size() - 1)
        << " iterations -> " << output_dir << "\n";
    return 0;
  });
}

namespace {

void write_distributions_csv(const fs::path& p, const ExperimentReport& rep) {
  auto f = open_out(p);
  f << "label,repetition,initial_cost,optimized_cost\n";
  for (const auto& dist : rep.distributions)
    for (std::size_t r = 0; r < dist.initial_costs.size(); ++r)
      f << dist.label << "," << r << "," << format_double(dist.initial_costs[r]) << ","
        << format_double(dist.optimized_costs[r]) << "\n";
}

json stats_json(const SummaryStats& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"q25", s.q25},
          {"q75", s.q75},   {"min", s.min},       {"max", s.max}};
}

json report_json(const ExperimentReport& rep) {
  json j;
  j["repetitions"] = rep.repetitions;
  json dists = json::array();
  for (const auto& d : rep.distributions) {
    dists.push_back({{"label", d.label},
                     {"initial", stats_json(summarize(d.initial_costs))},
                     {"optimized", stats_json(summarize(d.optimized_costs))}});
  }
  j["distributions"] = std::move(dists);
  json checks = json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"value", c.value},
                      {"threshold", c.threshold}});
  j["checks"] = std::move(checks);
  j["all_passed"] = rep.all_passed();
  return j;
}

}  // namespace

int cmd_experiment(const std::string& kind, const std::string& path,
                   const std::string& output_dir, const CliOverrides& overrides,
                   std::ostream& out, std::ostream& err) {
  return guard(err, [&]() -> int {
    ScenarioFile file = load_scenario_file(path);
    apply_overrides(file, overrides);
    fs::create_directories(output_dir);

    ExperimentReport report;
    json extra;
    if (kind == "noise") {
      report = run_noise_experiment(file.scenario, file.experiment.noise,
                                    file.experiment.repetitions, file.experiment.phases,
                                    file.optimizer, file.experiment.seed, overrides.threads);
    } else if (kind == "deadzone") {
      const DeadzoneReport dz = run_deadzone_experiment(file.scenario, file.experiment.phases,
                                                        file.optimizer);
      report = dz.report;
      extra["deadzone_exists"] = dz.deadzone_exists;
      extra["trailing_max_uncertainty"] = dz.trailing_max_uncertainty;
      extra["both_driven_to_zero"] = dz.both_driven_to_zero;
      write_states_csv(fs::path(output_dir) / "states.csv", dz.final_sim);
    } else if (kind == "static") {
      const StaticComparisonReport st = run_static_experiment(
          file.scenario, file.experiment.phases, file.optimizer, file.experiment.seed);
      report = st.report;
      extra["optimized_cost_optimal"] = st.optimized_cost_optimal;
      extra["optimized_cost_practical"] = st.optimized_cost_practical;
      extra["relative_gap"] = st.relative_gap;
    } else {
      err << "error: unknown experiment kind '" << kind
          << "' (expected static, deadzone, or noise)\n";
      return 1;
    }

    write_distributions_csv(fs::path(output_dir) / "repetitions.csv", report);
    json summary = report_json(report);
    if (!extra.is_null()) summary["details"] = std::move(extra);
    auto f = open_out(fs::path(output_dir) / "summary.json");
    f << summary.dump(2) << "\n";

    for (const auto& c : report.checks)
      out << (c.passed ? "PASS " : "FAIL ") << c.name << " (value "
          << format_double(c.value) << ", threshold " << format_double(c.threshold) << ")\n";
    return report.all_passed() ? 0 : 2;
  });
}

}  // namespace pm
