#ifndef PM_OPTIMIZER_HPP
#define PM_OPTIMIZER_HPP

#include <cstdint>
#include <span>
#include <vector>

#include "pm/controllers.hpp"
#include "pm/ipa.hpp"
#include "pm/simulator.hpp"

namespace pm {

struct DescentConfig {
  double armijo_c1 = 1e-4;
  double backtrack_factor = 0.5;
  int max_backtracks = 30;
  double initial_step = 1.0;
  int max_iterations = 100;
  double stall_tolerance = 1e-7;  // on |dJ| between accepted iterates
  std::uint64_t seed = 0;         // randomized restarts
  SimOptions sim;
};

struct IterateRecord {
  int iteration = 0;
  ControllerParams params;
  double cost = 0.0;
  double gradient_norm = 0.0;
  double step_length = 0.0;
  int backtracks = 0;
  std::vector<std::uint8_t> excitation_flags;
};

enum class StopReason { Stationary, Stalled, BacktrackingExhausted, MaxIterations };

struct OptimizeResult {
  ControllerParams params;
  double cost = 0.0;
  std::vector<IterateRecord> iterates;
  StopReason stop_reason = StopReason::MaxIterations;
};

/// Feasible steepest-descent direction for one tracking-combination block:
/// the projection of -grad onto {p : 0 <= alpha + p <= 1, sum p = 0}, solved
/// in closed form by dual scalar root finding.
std::vector<double> feasible_direction_alpha(std::span<const double> alpha,
                                             std::span<const double> grad_alpha);

/// Full feasible direction: alpha blocks via feasible_direction_alpha, the
/// remaining coordinates follow -grad (bounds are enforced on the trial
/// point: phi in [0, T], psi unbounded).
std::vector<double> feasible_direction_full(const ControllerParams& params,
                                            const Scenario& scenario,
                                            std::span<const double> grad);

/// Projected gradient descent with Armijo backtracking; every accepted
/// iterate is feasible and the cost sequence is nonincreasing.
OptimizeResult optimize(const Scenario& scenario, const ControllerParams& initial,
                        const DescentConfig& config = {});

/// Seeded multi-start wrapper; restarts run concurrently (simulations are
/// pure). Returns the best run, with `threads` as in parallel_for.
OptimizeResult multistart_optimize(const Scenario& scenario,
                                   const std::vector<ControllerParams>& starts,
                                   const DescentConfig& config, int threads = 0);

}  // namespace pm

#endif  // PM_OPTIMIZER_HPP
