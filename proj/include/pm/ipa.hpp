#ifndef PM_IPA_HPP
#define PM_IPA_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "pm/controllers.hpp"
#include "pm/simulator.hpp"

namespace pm {

/// State sensitivities with respect to the flat parameter vector (dimension D
/// per ParamLayout). Rows are stored contiguously.
struct SensitivityState {
  std::size_t dim = 0;                          // D
  std::vector<double> s_prime;                  // N x D
  std::vector<double> R_prime;                  // M x D
  std::vector<double> integrator_prime;         // N x D
  std::vector<std::vector<double>> tau_prime;   // per logged event, D each

  static SensitivityState zeros(std::size_t num_agents, std::size_t num_targets,
                                std::size_t dim);
  std::span<double> s_row(std::size_t j) { return {s_prime.data() + j * dim, dim}; }
  std::span<double> r_row(std::size_t i) { return {R_prime.data() + i * dim, dim}; }
  std::span<double> i_row(std::size_t j) { return {integrator_prime.data() + j * dim, dim}; }
  std::span<const double> s_row(std::size_t j) const { return {s_prime.data() + j * dim, dim}; }
  std::span<const double> r_row(std::size_t i) const { return {R_prime.data() + i * dim, dim}; }
  std::span<const double> i_row(std::size_t j) const {
    return {integrator_prime.data() + j * dim, dim};
  }
};

struct GradientReport {
  std::vector<double> gradient;  // dJ/dtheta, length D
  /// Integral of sum_i R'_i over each quadrature segment, in order.
  std::vector<std::vector<double>> segment_contributions;
  /// Set for agents whose whole parameter block is exactly zero while the
  /// agent never sensed a target: the classic lack-of-event-excitation
  /// signature, where IPA cannot see the true gradient.
  std::vector<std::uint8_t> excitation_flags;  // per agent
  bool any_excitation_flag() const;
};

/// Forward simulation with simultaneous sensitivity propagation: the same
/// stepper and the same event splits as the plain forward pass.
struct SensitivityRun {
  SimOutput sim;
  SensitivityState sensitivities;  // final values; tau_prime covers all events
  GradientReport report;
  // dense per-sample traces, only filled when requested (tests)
  std::vector<std::vector<double>> s_prime_samples;
  std::vector<std::vector<double>> R_prime_samples;
  std::vector<std::vector<std::uint8_t>> in_zero_samples;
};

SensitivityRun simulate_with_sensitivities(const Scenario& scenario,
                                           const ControllerParams& params,
                                           const SimOptions& options = {},
                                           bool record_dense = false);

/// Cost gradient for the parameters that produced `sim`. Re-propagates
/// sensitivities along the same trajectory; `sim` is used for consistency
/// checks (event log and cost must match).
GradientReport gradient(const Scenario& scenario, const ControllerParams& params,
                        const SimOutput& sim, const SimOptions& options = {});

// ---------------------------------------------------------------------------
// Building blocks, exposed for direct verification. The engine uses exactly
// these routines.

/// Frozen inter-event segment: modes, memberships, and the forward state at
/// t0. Integration assumes no event occurs in (t0, t1).
struct SegmentContext {
  const Scenario* scenario = nullptr;
  const ControllerParams* params = nullptr;
  double t0 = 0.0, t1 = 0.0;
  double step = 1e-3;

  struct AgentMode {
    std::size_t phase = 0;  // 0-based
    bool bang = false;
    double bang_dir = 0.0;
    bool saturated = false;
    double sat_dir = 0.0;
    bool integrator_active = false;
  };
  std::vector<AgentMode> modes;

  std::vector<double> s0, R0, I0;
  std::vector<std::uint8_t> in_zero_set;      // M
  std::vector<std::uint8_t> pair_inside;      // M*N, index i*N + j
  std::vector<std::int8_t> pair_side;         // M*N
};

struct PropagateResult {
  SensitivityState sens;
  std::vector<double> s, R, I;  // forward state at t1
};

/// Integrates d/dt x' = (df/dx) x' + df/dtheta across the segment with the
/// mode-specific terms of the active parameterization.
PropagateResult propagate_interval(const SensitivityState& sens, const SegmentContext& ctx);

/// Inputs for an event-time reset. Only the fields relevant to the event kind
/// are read.
struct EventResetInput {
  ParamLayout layout;
  Event event;
  double f_pre = 0.0;   // agent velocity just before the event
  double f_post = 0.0;  // agent velocity just after
  double bang_dir = 0.0;                   // gamma, ReachSwitchPoint
  std::vector<double> arrival_tau_prime;   // optimal TrackPeriodEnd chain input
  // IntegratorActivate:
  double error_value = 0.0;               // e(t~)
  double error_rate = 0.0;                // de/dt at t~ along the flow
  std::vector<double> error_dtheta;       // direct partial of e wrt theta
};

struct EventResetResult {
  SensitivityState sens;
  std::vector<double> tau_prime;  // event-time derivative, length D
};

/// Applies the boundary condition x'(tau+) = x'(tau-) + (f_pre - f_post) tau'
/// with the event-kind-specific tau' and state resets. Events with continuous
/// dynamics pass through unchanged.
EventResetResult apply_event_reset(const SensitivityState& sens, const EventResetInput& in);

}  // namespace pm

#endif  // PM_IPA_HPP
