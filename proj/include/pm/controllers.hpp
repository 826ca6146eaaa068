#ifndef PM_CONTROLLERS_HPP
#define PM_CONTROLLERS_HPP

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pm/model.hpp"

namespace pm {

/// Convex combination over targets used as a tracking reference.
struct TrackingCombination {
  std::vector<double> weights;  // each in [0,1], summing to 1 within 1e-9
};

inline constexpr double kSimplexTol = 1e-9;

/// Parameters of the optimal parameterization for one agent: travel at full
/// speed to switching point psi_l, then velocity-match the combination
/// alpha_l for duration phi_l.
struct OptimalAgentParams {
  std::vector<double> switching_points;           // psi_l, mission-space units
  std::vector<TrackingCombination> combinations;  // alpha_l
  std::vector<double> durations;                  // phi_l >= 0, seconds
  std::size_t phases() const { return durations.size(); }
};

/// Parameters of the practical parameterization for one agent: saturated PI
/// tracking of the position combination alpha_l for duration phi_l, with the
/// integral term activated once the proportional error falls below
/// switch_tolerance.
struct PracticalAgentParams {
  std::vector<TrackingCombination> combinations;
  std::vector<double> durations;
  double gain_p = 5.0;           // K_p, 1/sec
  double gain_i = 1.0;           // K_i, 1/sec^2
  double switch_tolerance = 0.1;  // eps_tol in (0,1)
  std::size_t phases() const { return durations.size(); }
};

enum class ControllerVariant { Optimal, Practical };

/// Per-agent parameter bundle; the variant is homogeneous across agents.
struct ControllerParams {
  std::variant<std::vector<OptimalAgentParams>, std::vector<PracticalAgentParams>> agents;

  ControllerVariant variant() const {
    return std::holds_alternative<std::vector<OptimalAgentParams>>(agents)
               ? ControllerVariant::Optimal
               : ControllerVariant::Practical;
  }
  std::size_t num_agents() const;
  std::size_t phases() const;  // L (identical across agents)

  const std::vector<OptimalAgentParams>& optimal() const {
    return std::get<std::vector<OptimalAgentParams>>(agents);
  }
  const std::vector<PracticalAgentParams>& practical() const {
    return std::get<std::vector<PracticalAgentParams>>(agents);
  }
  std::vector<OptimalAgentParams>& optimal() {
    return std::get<std::vector<OptimalAgentParams>>(agents);
  }
  std::vector<PracticalAgentParams>& practical() {
    return std::get<std::vector<PracticalAgentParams>>(agents);
  }
};

/// Index map between ControllerParams and the flat parameter vector theta used
/// by IPA and the optimizer. Per-agent blocks are contiguous:
///   optimal:   [psi_0..psi_{L-1} | alpha_{0,0}..alpha_{L-1,M-1} | phi_0..phi_{L-1}]
///   practical: [alpha | phi]
struct ParamLayout {
  ControllerVariant variant = ControllerVariant::Optimal;
  std::size_t num_agents = 0;
  std::size_t num_targets = 0;
  std::size_t phases = 0;

  static ParamLayout of(const ControllerParams& params, const Scenario& scenario);

  std::size_t per_agent() const {
    return variant == ControllerVariant::Optimal ? phases * (2 + num_targets)
                                                 : phases * (1 + num_targets);
  }
  std::size_t total() const { return num_agents * per_agent(); }
  std::size_t agent_begin(std::size_t j) const { return j * per_agent(); }
  std::size_t psi_index(std::size_t j, std::size_t l) const;
  std::size_t alpha_index(std::size_t j, std::size_t l, std::size_t i) const;
  std::size_t phi_index(std::size_t j, std::size_t l) const;

  std::vector<double> pack(const ControllerParams& params) const;
  ControllerParams unpack(std::span<const double> theta,
                          const ControllerParams& prototype) const;
};

enum class ModeKind { Bang, TrackVelocity };

/// One realized control interval of the optimal parameterization.
struct ModePhase {
  ModeKind kind;
  double start;
  double end;
  std::size_t phase;  // 1-based paper index l
  double direction;   // bang direction, sgn(psi_l - s); 0 for zero-length
};

/// Realized mode schedule of the optimal parameterization starting from
/// agent_start. Bang intervals end exactly when the switching point is
/// reached (unit speed); tracking intervals last phi_l; the schedule is
/// truncated at T, and the last mode is extended to T if the phases run out.
std::vector<ModePhase> optimal_mode_schedule(double agent_start,
                                             const OptimalAgentParams& params,
                                             std::span<const TargetTrajectory> targets,
                                             double T);

enum class PracticalMode { SaturatedPlus, SaturatedMinus, Proportional, ProportionalIntegral };

struct PracticalControl {
  double u = 0.0;    // saturated control in [-1, 1]
  double raw = 0.0;  // K_p e + K_i I before saturation
  double error = 0.0;
  PracticalMode mode = PracticalMode::Proportional;
};

/// Saturated PI control for tracking period `phase` (0-based). `integrator`
/// is the accumulated error integral since activation (0 before activation).
/// Mode membership feeds the simulator's event detection.
PracticalControl practical_control(double t, double agent_pos, double integrator,
                                   bool integrator_active, std::size_t phase,
                                   const PracticalAgentParams& params,
                                   std::span<const TargetTrajectory> targets);

struct ParamViolation {
  std::string where;
  std::string what;
};

/// Checks all parameter invariants against a scenario; empty means feasible.
std::vector<ParamViolation> validate_params(const ControllerParams& params,
                                            const Scenario& scenario);

}  // namespace pm

#endif  // PM_CONTROLLERS_HPP
