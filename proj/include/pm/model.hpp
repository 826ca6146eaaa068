#ifndef PM_MODEL_HPP
#define PM_MODEL_HPP

#include <span>
#include <string>
#include <vector>

#include "pm/targets.hpp"

namespace pm {

struct SimOutput;  // simulator.hpp

/// Uncertainty is treated as pinned at zero once it drops into this absolute
/// band; prevents floating-point chattering on the R = 0 boundary.
inline constexpr double kZeroBand = 1e-12;

struct AgentSpec {
  AgentSpec(double initial_position, double sensing_range);
  double initial_position;
  double sensing_range;  // r_j > 0
};

struct TargetSpec {
  TargetSpec(double growth_rate, double reduction_rate, double initial_uncertainty,
             TargetTrajectory trajectory);
  double growth_rate;          // A_i, uncertainty/sec, > 0
  double reduction_rate;       // B_i > A_i
  double initial_uncertainty;  // R_i(0) >= 0
  TargetTrajectory trajectory;
};

/// A full problem instance.
struct Scenario {
  Scenario(std::vector<AgentSpec> agents, std::vector<TargetSpec> targets,
           double horizon, double separation_margin = 0.0);
  std::vector<AgentSpec> agents;
  std::vector<TargetSpec> targets;
  double horizon;            // T > 0
  double separation_margin;  // Delta^min >= 0

  std::size_t num_agents() const { return agents.size(); }
  std::size_t num_targets() const { return targets.size(); }
};

/// Copies the target trajectories into a contiguous vector (the span-based
/// controller operations want one).
std::vector<TargetTrajectory> target_trajectories(const Scenario& scenario);

/// Triangular monitoring kernel: max{0, 1 - |target - agent| / range}.
double monitoring(double target_pos, double agent_pos, double sensing_range);

/// Joint coverage 1 - prod_j (1 - p_j); nondecreasing in every argument.
double joint_monitoring(std::span<const double> per_agent_values);

/// Right-hand side of the uncertainty dynamics, with the reduction clamped to
/// zero on the R = 0 boundary whenever A < B*P.
double uncertainty_rate(double R, double A, double B, double P);

/// Time-averaged total uncertainty (1/T) * integral of sum_i R_i over [0, T],
/// integrated per inter-event segment on the trajectory's sample grid.
double cost(const SimOutput& trajectory);

struct AssumptionReport {
  double max_target_speed = 0.0;
  double speed_limit = 1.0;
  bool speed_ok = true;
  double min_separation = 0.0;
  double min_separation_time = 0.0;
  double required_separation = 0.0;
  bool separation_ok = true;
  std::vector<std::string> warnings;
  bool all_ok() const { return speed_ok && separation_ok; }
};

/// Grid-checks the standing assumptions (target speed bound, pairwise target
/// separation). Violations are reported as warnings, not errors: several of
/// the bundled experiments violate them on purpose.
AssumptionReport validate_assumptions(const Scenario& scenario, double grid_step);

}  // namespace pm

#endif  // PM_MODEL_HPP
