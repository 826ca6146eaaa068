#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "pm/cli.hpp"
#include "pm/ipa.hpp"
#include "pm/oracle.hpp"

namespace pm {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ScenarioParseError(path + ": " + what);
}

const json& member(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) fail(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) fail(path + "." + key, "missing field");
  return *it;
}

double num(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

double num_or(const json& j, const char* key, double fallback, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return num(j[key], path + "." + key);
}

TargetTrajectory parse_trajectory(const json& j, const std::string& path) {
  const std::string type = member(j, "type", path).get<std::string>();
  if (type == "static") return TargetTrajectory::fixed(num(member(j, "position", path), path + ".position"));
  if (type == "piecewise_linear") {
    const json& wp = member(j, "waypoints", path);
    if (!wp.is_array() || wp.size() < 2) fail(path + ".waypoints", "need at least two [time, position] pairs");
    std::vector<std::pair<double, double>> points;
    for (std::size_t k = 0; k < wp.size(); ++k) {
      const json& p = wp[k];
      const std::string pp = path + ".waypoints[" + std::to_string(k) + "]";
      if (!p.is_array() || p.size() != 2) fail(pp, "expected [time, position]");
      points.emplace_back(num(p[0], pp), num(p[1], pp));
    }
    try {
      return TargetTrajectory::piecewise_linear(std::move(points));
    } catch (const std::exception& e) {
      fail(path + ".waypoints", e.what());
    }
  }
  if (type == "sinusoid") {
    return TargetTrajectory::sinusoid(num(member(j, "offset", path), path + ".offset"),
                                      num(member(j, "amplitude", path), path + ".amplitude"),
                                      num(member(j, "angular_frequency", path), path + ".angular_frequency"),
                                      num_or(j, "phase", 0.0, path));
  }
  fail(path + ".type", "unknown trajectory type '" + type + "'");
}

json trajectory_to_json(const TargetTrajectory& traj) {
  json j;
  if (const auto* s = std::get_if<StaticPath>(&traj.path())) {
    j["type"] = "static";
    j["position"] = s->position;
  } else if (const auto* p = std::get_if<PiecewiseLinearPath>(&traj.path())) {
    j["type"] = "piecewise_linear";
    json wp = json::array();
    for (std::size_t k = 0; k < p->times.size(); ++k)
      wp.push_back(json::array({p->times[k], p->positions[k]}));
    j["waypoints"] = std::move(wp);
  } else {
    const auto& s = std::get<SinusoidPath>(traj.path());
    j["type"] = "sinusoid";
    j["offset"] = s.offset;
    j["amplitude"] = s.amplitude;
    j["angular_frequency"] = s.angular_frequency;
    j["phase"] = s.phase;
  }
  return j;
}

std::vector<TrackingCombination> parse_combinations(const json& j, std::size_t M,
                                                    const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of weight vectors");
  std::vector<TrackingCombination> out;
  for (std::size_t l = 0; l < j.size(); ++l) {
    const std::string pp = path + "[" + std::to_string(l) + "]";
    if (!j[l].is_array() || j[l].size() != M)
      fail(pp, "expected " + std::to_string(M) + " weights");
    TrackingCombination c;
    for (std::size_t i = 0; i < M; ++i) c.weights.push_back(num(j[l][i], pp));
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<double> parse_reals(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k)
    out.push_back(num(j[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

ControllerParams parse_controller(const json& j, const Scenario& scenario,
                                  const std::string& path) {
  const std::string variant = member(j, "variant", path).get<std::string>();
  const bool optimal = variant == "optimal";
  if (!optimal && variant != "practical")
    fail(path + ".variant", "expected 'optimal' or 'practical'");

  if (j.contains("random")) {
    const json& r = j["random"];
    const std::uint64_t seed =
        static_cast<std::uint64_t>(num_or(r, "seed", 0.0, path + ".random"));
    const std::size_t phases =
        static_cast<std::size_t>(num_or(j, "phases", 2.0, path));
    const std::string kind =
        r.is_object() && r.contains("kind") ? r["kind"].get<std::string>() : "visiting";
    const ControllerVariant v =
        optimal ? ControllerVariant::Optimal : ControllerVariant::Practical;
    ControllerParams p = kind == "interior" ? random_params(scenario, v, phases, seed)
                                            : visiting_sequence_params(scenario, v, phases, seed);
    if (!optimal && j.contains("gain_p")) {
      for (auto& a : p.practical()) {
        a.gain_p = num(j["gain_p"], path + ".gain_p");
        a.gain_i = num_or(j, "gain_i", a.gain_i, path);
        a.switch_tolerance = num_or(j, "switch_tolerance", a.switch_tolerance, path);
      }
    }
    return p;
  }

  const json& agents = member(j, "agents", path);
  if (!agents.is_array() || agents.size() != scenario.num_agents())
    fail(path + ".agents", "expected one parameter block per agent");

  ControllerParams out;
  if (optimal) {
    std::vector<OptimalAgentParams> blocks;
    for (std::size_t a = 0; a < agents.size(); ++a) {
      const std::string pp = path + ".agents[" + std::to_string(a) + "]";
      OptimalAgentParams b;
      b.switching_points = parse_reals(member(agents[a], "switching_points", pp),
                                       pp + ".switching_points");
      b.durations = parse_reals(member(agents[a], "durations", pp), pp + ".durations");
      b.combinations = parse_combinations(member(agents[a], "combinations", pp),
                                          scenario.num_targets(), pp + ".combinations");
      blocks.push_back(std::move(b));
    }
    out.agents = std::move(blocks);
  } else {
    std::vector<PracticalAgentParams> blocks;
    for (std::size_t a = 0; a < agents.size(); ++a) {
      const std::string pp = path + ".agents[" + std::to_string(a) + "]";
      PracticalAgentParams b;
      b.durations = parse_reals(member(agents[a], "durations", pp), pp + ".durations");
      b.combinations = parse_combinations(member(agents[a], "combinations", pp),
                                          scenario.num_targets(), pp + ".combinations");
      b.gain_p = num_or(agents[a], "gain_p", 5.0, pp);
      b.gain_i = num_or(agents[a], "gain_i", 1.0, pp);
      b.switch_tolerance = num_or(agents[a], "switch_tolerance", 0.1, pp);
      blocks.push_back(std::move(b));
    }
    out.agents = std::move(blocks);
  }
  return out;
}

ScenarioFile parse_document(const json& root, const std::string& origin) {
  // scenario
  std::vector<AgentSpec> agents;
  const json& ja = member(root, "agents", origin);
  if (!ja.is_array() || ja.empty()) fail(origin + ".agents", "expected a non-empty array");
  for (std::size_t k = 0; k < ja.size(); ++k) {
    const std::string pp = origin + ".agents[" + std::to_string(k) + "]";
    const double pos = num(member(ja[k], "initial_position", pp), pp + ".initial_position");
    const double r = num(member(ja[k], "sensing_range", pp), pp + ".sensing_range");
    if (!(r > 0.0)) fail(pp + ".sensing_range", "must be strictly positive");
    agents.emplace_back(pos, r);
  }

  std::vector<TargetSpec> targets;
  const json& jt = member(root, "targets", origin);
  if (!jt.is_array() || jt.empty()) fail(origin + ".targets", "expected a non-empty array");
  for (std::size_t k = 0; k < jt.size(); ++k) {
    const std::string pp = origin + ".targets[" + std::to_string(k) + "]";
    const double A = num(member(jt[k], "growth_rate", pp), pp + ".growth_rate");
    const double B = num(member(jt[k], "reduction_rate", pp), pp + ".reduction_rate");
    const double R0 = num(member(jt[k], "initial_uncertainty", pp), pp + ".initial_uncertainty");
    if (!(A > 0.0)) fail(pp + ".growth_rate", "must be > 0");
    if (!(B > A)) fail(pp + ".reduction_rate", "must exceed growth_rate");
    if (!(R0 >= 0.0)) fail(pp + ".initial_uncertainty", "must be >= 0");
    targets.emplace_back(A, B, R0,
                         parse_trajectory(member(jt[k], "trajectory", pp), pp + ".trajectory"));
  }

  const double horizon = num(member(root, "horizon", origin), origin + ".horizon");
  if (!(horizon > 0.0)) fail(origin + ".horizon", "must be > 0");
  const double margin = num_or(root, "separation_margin", 0.0, origin);

  Scenario scenario(std::move(agents), std::move(targets), horizon, margin);

  // simulator options
  SimOptions sim;
  if (root.contains("simulator")) {
    const json& js = root["simulator"];
    sim.step = num_or(js, "step", 0.0, origin + ".simulator");
    sim.event_tolerance = num_or(js, "event_tolerance", 0.0, origin + ".simulator");
    sim.max_events = static_cast<std::size_t>(
        num_or(js, "max_events", 1e6, origin + ".simulator"));
    if (js.contains("noise")) {
      NoiseModel nm;
      const json& jn = js["noise"];
      nm.position_noise_scale = num_or(jn, "position_noise_scale", 0.0, origin + ".simulator.noise");
      nm.velocity_noise_scale = num_or(jn, "velocity_noise_scale", 0.0, origin + ".simulator.noise");
      nm.sample_interval = num_or(jn, "sample_interval", 0.05, origin + ".simulator.noise");
      nm.seed = static_cast<std::uint64_t>(num_or(jn, "seed", 0.0, origin + ".simulator.noise"));
      if (nm.enabled()) sim.noise = nm;
    }
  }

  // controller
  ControllerParams params =
      parse_controller(member(root, "controller", origin), scenario, origin + ".controller");
  {
    const auto violations = validate_params(params, scenario);
    if (!violations.empty())
      fail(origin + ".controller." + violations.front().where, violations.front().what);
  }

  // optimizer
  DescentConfig opt;
  if (root.contains("optimizer")) {
    const json& jo = root["optimizer"];
    const std::string po = origin + ".optimizer";
    opt.armijo_c1 = num_or(jo, "armijo_c1", opt.armijo_c1, po);
    opt.backtrack_factor = num_or(jo, "backtrack_factor", opt.backtrack_factor, po);
    opt.max_backtracks = static_cast<int>(num_or(jo, "max_backtracks", opt.max_backtracks, po));
    opt.initial_step = num_or(jo, "initial_step", opt.initial_step, po);
    opt.max_iterations = static_cast<int>(num_or(jo, "max_iterations", opt.max_iterations, po));
    opt.stall_tolerance = num_or(jo, "stall_tolerance", opt.stall_tolerance, po);
    opt.seed = static_cast<std::uint64_t>(num_or(jo, "seed", 0.0, po));
  }
  opt.sim = sim;

  ScenarioFile file{std::move(scenario), std::move(params), sim, std::move(opt), {}};

  if (root.contains("experiment")) {
    const json& je = root["experiment"];
    const std::string pe = origin + ".experiment";
    file.experiment.repetitions =
        static_cast<std::size_t>(num_or(je, "repetitions", 50.0, pe));
    file.experiment.phases = static_cast<std::size_t>(num_or(je, "phases", 4.0, pe));
    file.experiment.seed = static_cast<std::uint64_t>(num_or(je, "seed", 7.0, pe));
    if (je.contains("noise")) {
      const json& jn = je["noise"];
      file.experiment.noise.position_noise_scale =
          num_or(jn, "position_noise_scale", 0.0, pe + ".noise");
      file.experiment.noise.velocity_noise_scale =
          num_or(jn, "velocity_noise_scale", 0.0, pe + ".noise");
      file.experiment.noise.sample_interval = num_or(jn, "sample_interval", 0.05, pe + ".noise");
      file.experiment.noise.seed =
          static_cast<std::uint64_t>(num_or(jn, "seed", 0.0, pe + ".noise"));
    }
  }
  return file;
}

}  // namespace

ScenarioFile parse_scenario_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    // anchor the diagnostic to a line/column
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ScenarioParseError(origin + ":" + std::to_string(line) + ":" + std::to_string(col) +
                             ": " + e.what());
  }
  return parse_document(root, origin);
}

ScenarioFile load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioParseError(path + ": cannot open file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path);
}

std::string serialize_scenario_file(const ScenarioFile& file) {
  json root;
  root["horizon"] = file.scenario.horizon;
  root["separation_margin"] = file.scenario.separation_margin;
  json ja = json::array();
  for (const auto& a : file.scenario.agents)
    ja.push_back({{"initial_position", a.initial_position}, {"sensing_range", a.sensing_range}});
  root["agents"] = std::move(ja);
  json jt = json::array();
  for (const auto& t : file.scenario.targets)
    jt.push_back({{"growth_rate", t.growth_rate},
                  {"reduction_rate", t.reduction_rate},
                  {"initial_uncertainty", t.initial_uncertainty},
                  {"trajectory", trajectory_to_json(t.trajectory)}});
  root["targets"] = std::move(jt);

  json jc;
  const bool optimal = file.params.variant() == ControllerVariant::Optimal;
  jc["variant"] = optimal ? "optimal" : "practical";
  jc["phases"] = file.params.phases();
  json blocks = json::array();
  if (optimal) {
    for (const auto& a : file.params.optimal()) {
      json b;
      b["switching_points"] = a.switching_points;
      b["durations"] = a.durations;
      json combos = json::array();
      for (const auto& c : a.combinations) combos.push_back(c.weights);
      b["combinations"] = std::move(combos);
      blocks.push_back(std::move(b));
    }
  } else {
    for (const auto& a : file.params.practical()) {
      json b;
      b["durations"] = a.durations;
      json combos = json::array();
      for (const auto& c : a.combinations) combos.push_back(c.weights);
      b["combinations"] = std::move(combos);
      b["gain_p"] = a.gain_p;
      b["gain_i"] = a.gain_i;
      b["switch_tolerance"] = a.switch_tolerance;
      blocks.push_back(std::move(b));
    }
  }
  jc["agents"] = std::move(blocks);
  root["controller"] = std::move(jc);

  json js;
  js["step"] = file.sim_options.step;
  js["event_tolerance"] = file.sim_options.event_tolerance;
  js["max_events"] = file.sim_options.max_events;
  if (file.sim_options.noise) {
    const NoiseModel& nm = *file.sim_options.noise;
    js["noise"] = {{"position_noise_scale", nm.position_noise_scale},
                   {"velocity_noise_scale", nm.velocity_noise_scale},
                   {"sample_interval", nm.sample_interval},
                   {"seed", nm.seed}};
  }
  root["simulator"] = std::move(js);

  json jo;
  jo["armijo_c1"] = file.optimizer.armijo_c1;
  jo["backtrack_factor"] = file.optimizer.backtrack_factor;
  jo["max_backtracks"] = file.optimizer.max_backtracks;
  jo["initial_step"] = file.optimizer.initial_step;
  jo["max_iterations"] = file.optimizer.max_iterations;
  jo["stall_tolerance"] = file.optimizer.stall_tolerance;
  jo["seed"] = file.optimizer.seed;
  root["optimizer"] = std::move(jo);

  json je;
  je["repetitions"] = file.experiment.repetitions;
  je["phases"] = file.experiment.phases;
  je["seed"] = file.experiment.seed;
  je["noise"] = {{"position_noise_scale", file.experiment.noise.position_noise_scale},
                 {"velocity_noise_scale", file.experiment.noise.velocity_noise_scale},
                 {"sample_interval", file.experiment.noise.sample_interval},
                 {"seed", file.experiment.noise.seed}};
  root["experiment"] = std::move(je);

  return root.dump(2) + "\n";
}

void save_scenario_file(const ScenarioFile& file, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out << serialize_scenario_file(file);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace pm
