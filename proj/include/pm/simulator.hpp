#ifndef PM_SIMULATOR_HPP
#define PM_SIMULATOR_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pm/controllers.hpp"
#include "pm/model.hpp"

namespace pm {

enum class EventKind {
  SenseEnter,
  SenseExit,
  RHitsZero,
  ZExit,
  ReachSwitchPoint,
  TrackPeriodEnd,
  SaturationCross,
  IntegratorActivate,
  TargetBreakpoint,
  HorizonEnd,
};

const char* to_string(EventKind k);

struct Event {
  double time = 0.0;
  EventKind kind = EventKind::HorizonEnd;
  int agent = -1;   // j, when applicable
  int target = -1;  // i, when applicable
  int phase = -1;   // 1-based period index l, when applicable

  bool same_kind(const Event& o) const {
    return kind == o.kind && agent == o.agent && target == o.target && phase == o.phase;
  }
};

/// Measurement noise injected into the controller's view of the targets.
/// Noise values are drawn per target at fixed sampling instants and held
/// until the next sample; true states and the cost always use true positions.
struct NoiseModel {
  double position_noise_scale = 0.0;  // kappa_1
  double velocity_noise_scale = 0.0;  // kappa_2
  double sample_interval = 0.05;      // controller sampling step, seconds
  std::uint64_t seed = 0;

  bool enabled() const {
    return position_noise_scale > 0.0 || velocity_noise_scale > 0.0;
  }
};

struct SimOptions {
  double step = 0.0;             // 0: use min(1e-3 * T, 1e-2)
  double event_tolerance = 0.0;  // 0: use 1e-9 * T
  std::size_t max_events = 1'000'000;
  std::optional<NoiseModel> noise;

  double resolved_step(double T) const {
    return step > 0.0 ? step : std::min(1e-3 * T, 1e-2);
  }
  double resolved_event_tolerance(double T) const {
    return event_tolerance > 0.0 ? event_tolerance : 1e-9 * T;
  }
};

/// Snapshot of the hybrid state (used by event-detection queries and tests).
struct HybridState {
  double time = 0.0;
  std::vector<double> agent_positions;
  std::vector<double> uncertainties;
  std::vector<double> integrators;      // practical PI accumulators
  std::vector<std::uint8_t> in_zero_set;  // per-target Z membership
};

struct SimOutput {
  std::vector<double> times;  // accepted steps, times[0] = 0, back() = T
  // one series per agent / target, aligned with `times`
  std::vector<std::vector<double>> agent_positions;
  std::vector<std::vector<double>> uncertainties;
  std::vector<std::vector<double>> controls;
  std::vector<std::vector<double>> target_positions;
  std::vector<std::vector<double>> integrators;  // practical PI accumulators
  std::vector<Event> events;  // first at t=0, last is HorizonEnd at T
  /// Sample indices where the integrand has a kink (events and silent
  /// dynamics splits); quadrature never spans a break.
  std::vector<std::size_t> quad_breaks;
  std::vector<std::uint8_t> agent_ever_sensed;
  double cost = 0.0;  // J

  std::size_t num_samples() const { return times.size(); }
};

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Event-driven forward integration of the coupled hybrid system over [0, T].
/// Pure function of its inputs: identical inputs produce identical output.
SimOutput simulate(const Scenario& scenario, const ControllerParams& params,
                   const SimOptions& options = {});

/// Open-loop playback of piecewise-constant controls (used by the control
/// canonicalization oracle).
struct SampledControl {
  double grid_step = 0.0;
  std::vector<std::vector<double>> values;  // [agent][cell], in [-1, 1]

  std::size_t cells() const { return values.empty() ? 0 : values.front().size(); }
  double value(std::size_t agent, double t) const;
  static SampledControl zeros(std::size_t num_agents, double T, double grid_step);
};

SimOutput simulate_open_loop(const Scenario& scenario, const SampledControl& controls,
                             const SimOptions& options = {});

/// Earliest guard crossing strictly after t = 0 within (0, window_end],
/// localized by bisection to the event tolerance. Returns nullopt if the
/// window is event-free.
std::optional<Event> detect_events(const Scenario& scenario, const ControllerParams& params,
                                   double window_end, const SimOptions& options = {});

}  // namespace pm

#endif  // PM_SIMULATOR_HPP
