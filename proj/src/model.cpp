#include "pm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pm/quadrature.hpp"
#include "pm/simulator.hpp"

namespace pm {

AgentSpec::AgentSpec(double initial_position_, double sensing_range_)
    : initial_position(initial_position_), sensing_range(sensing_range_) {
  if (!std::isfinite(initial_position))
    throw std::invalid_argument("agent initial_position must be finite");
  if (!(sensing_range > 0.0) || !std::isfinite(sensing_range))
    throw std::invalid_argument("agent sensing_range must be strictly positive");
}

TargetSpec::TargetSpec(double growth_rate_, double reduction_rate_,
                       double initial_uncertainty_, TargetTrajectory trajectory_)
    : growth_rate(growth_rate_),
      reduction_rate(reduction_rate_),
      initial_uncertainty(initial_uncertainty_),
      trajectory(std::move(trajectory_)) {
  if (!(growth_rate > 0.0)) throw std::invalid_argument("target growth_rate must be > 0");
  if (!(reduction_rate > growth_rate))
    throw std::invalid_argument("target reduction_rate must exceed growth_rate");
  if (!(initial_uncertainty >= 0.0))
    throw std::invalid_argument("target initial_uncertainty must be >= 0");
}

Scenario::Scenario(std::vector<AgentSpec> agents_, std::vector<TargetSpec> targets_,
                   double horizon_, double separation_margin_)
    : agents(std::move(agents_)),
      targets(std::move(targets_)),
      horizon(horizon_),
      separation_margin(separation_margin_) {
  if (agents.empty()) throw std::invalid_argument("scenario needs at least one agent");
  if (targets.empty()) throw std::invalid_argument("scenario needs at least one target");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("scenario horizon must be > 0");
  if (!(separation_margin >= 0.0))
    throw std::invalid_argument("separation_margin must be >= 0");
  for (const auto& tgt : targets)
    if (tgt.trajectory.max_time() < horizon)
      throw std::invalid_argument("target trajectory does not span the horizon");
}

std::vector<TargetTrajectory> target_trajectories(const Scenario& scenario) {
  std::vector<TargetTrajectory> out;
  out.reserve(scenario.targets.size());
  for (const auto& t : scenario.targets) out.push_back(t.trajectory);
  return out;
}

double monitoring(double target_pos, double agent_pos, double sensing_range) {
  return std::max(0.0, 1.0 - std::abs(target_pos - agent_pos) / sensing_range);
}

double joint_monitoring(std::span<const double> per_agent_values) {
  double miss = 1.0;
  for (double p : per_agent_values) miss *= (1.0 - p);
  return 1.0 - miss;
}

double uncertainty_rate(double R, double A, double B, double P) {
  const double rate = A - B * P;
  if (R <= kZeroBand && rate < 0.0) return 0.0;
  return rate;
}

double cost(const SimOutput& trajectory) {
  const auto& times = trajectory.times;
  if (times.size() < 2) throw std::invalid_argument("trajectory has no samples");
  const double T = times.back() - times.front();
  if (!(T > 0.0)) throw std::invalid_argument("trajectory does not cover a positive horizon");

  SegmentQuadrature quad(1);
  std::size_t next_break = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    double sum = 0.0;
    for (const auto& series : trajectory.uncertainties) sum += series[k];
    quad.add(times[k], sum);
    while (next_break < trajectory.quad_breaks.size() &&
           trajectory.quad_breaks[next_break] == k) {
      quad.break_segment();
      ++next_break;
    }
  }
  return quad.finish()[0] / T;
}

AssumptionReport validate_assumptions(const Scenario& scenario, double grid_step) {
  if (!(grid_step > 0.0)) throw std::invalid_argument("grid_step must be > 0");
  AssumptionReport rep;
  double r_max = 0.0;
  for (const auto& a : scenario.agents) r_max = std::max(r_max, a.sensing_range);
  rep.required_separation = 2.0 * r_max + scenario.separation_margin;
  rep.min_separation = std::numeric_limits<double>::infinity();

  const double T = scenario.horizon;
  const std::size_t steps = static_cast<std::size_t>(std::ceil(T / grid_step));
  for (std::size_t k = 0; k <= steps; ++k) {
    const double t = std::min(T, k * grid_step);
    for (std::size_t i = 0; i < scenario.targets.size(); ++i) {
      rep.max_target_speed = std::max(
          rep.max_target_speed, std::abs(scenario.targets[i].trajectory.velocity(t)));
      for (std::size_t i2 = i + 1; i2 < scenario.targets.size(); ++i2) {
        const double gap = std::abs(scenario.targets[i].trajectory.position(t) -
                                    scenario.targets[i2].trajectory.position(t));
        if (gap < rep.min_separation) {
          rep.min_separation = gap;
          rep.min_separation_time = t;
        }
      }
    }
  }
  if (scenario.targets.size() < 2) rep.min_separation = std::numeric_limits<double>::infinity();

  rep.speed_ok = rep.max_target_speed <= rep.speed_limit;
  rep.separation_ok = rep.min_separation >= rep.required_separation;
  if (!rep.speed_ok)
    rep.warnings.push_back("target speed " + std::to_string(rep.max_target_speed) +
                           " exceeds the agent speed bound 1");
  if (!rep.separation_ok)
    rep.warnings.push_back("pairwise target separation " +
                           std::to_string(rep.min_separation) + " at t=" +
                           std::to_string(rep.min_separation_time) +
                           " is below 2*max_range + margin = " +
                           std::to_string(rep.required_separation));
  return rep;
}

}  // namespace pm
