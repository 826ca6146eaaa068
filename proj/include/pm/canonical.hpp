#ifndef PM_CANONICAL_HPP
#define PM_CANONICAL_HPP

#include <cstddef>
#include <vector>

#include "pm/model.hpp"
#include "pm/simulator.hpp"

namespace pm {

/// Exact agent position under an open-loop SampledControl (piecewise linear
/// between cell boundaries).
class OpenLoopPath {
 public:
  OpenLoopPath(const SampledControl& control, std::size_t agent, double start_position);
  double position(double t) const;
  double control(double t) const { return control_->value(agent_, t); }

 private:
  const SampledControl* control_;
  std::size_t agent_;
  std::vector<double> boundary_positions_;  // at k * grid_step
};

struct SensingPhase {
  std::size_t target;
  double t_begin;
  double t_end;
};

struct SensingDecomposition {
  std::vector<SensingPhase> phases;  // temporally ordered, adjacent targets differ
  std::size_t sequence_bound = 0;    // ceil(T / separation_margin); 0 when margin == 0
  bool bound_holds = true;
  bool fallback_used = false;  // partition overlapped (assumption violation)
};

/// Splits an agent's trajectory into single-target sensing phases: phase l
/// ends at the last exit of its target before the next target is first
/// sensed. Covers [0, T]; empty when the agent never senses anything.
SensingDecomposition decompose_sensing_sequence(const SampledControl& u,
                                                const Scenario& scenario, std::size_t agent);

struct CanonicalizeResult {
  SampledControl control;  // u' (differs from u only on whole cells inside (t1, t2))
  double t_check = 0.0;    // start of the velocity-match phase
  double t_hat = 0.0;      // end of the velocity-match phase
  double t1_eff = 0.0;     // cell-aligned interval actually rewritten
  double t2_eff = 0.0;
};

/// Lemma-1 control improvement on a single-target interval: full speed toward
/// the target, velocity-match it, full speed to the original endpoint. The
/// caller guarantees (via decompose) that only `target` is sensed on (t1, t2).
CanonicalizeResult canonicalize_interval(const SampledControl& u, std::size_t agent,
                                         std::size_t target, double t1, double t2,
                                         const Scenario& scenario);

struct ImprovementCheck {
  double cost_before = 0.0;
  double cost_after = 0.0;
  bool improved = false;  // cost_after <= cost_before + tolerance
};

/// Plays both controls through the simulator and compares costs.
ImprovementCheck verify_improvement(const SampledControl& u, const SampledControl& u_prime,
                                    const Scenario& scenario, const SimOptions& options = {},
                                    double tolerance = 1e-9);

}  // namespace pm

#endif  // PM_CANONICAL_HPP
