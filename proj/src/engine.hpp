// Internal entry points of the event-driven engine, shared between the plain
// simulator API and the IPA co-propagation.
#ifndef PM_ENGINE_HPP
#define PM_ENGINE_HPP

#include <cstdint>
#include <optional>
#include <vector>

#include "pm/ipa.hpp"
#include "pm/simulator.hpp"

namespace pm::detail {

struct EngineSensOutput {
  SensitivityState final_sens;
  std::vector<std::vector<double>> tau_log;          // per event, D each
  std::vector<double> grad_integral;                 // integral of sum_i R'_i, D
  std::vector<std::vector<double>> segment_grads;    // same, per quadrature segment
  bool record_dense = false;
  std::vector<std::vector<double>> s_prime_samples;
  std::vector<std::vector<double>> R_prime_samples;
  std::vector<std::vector<std::uint8_t>> in_zero_samples;
};

/// Runs the engine over [0, T]. Exactly one of `params` / `open_loop` must be
/// non-null. `sens` non-null enables simultaneous sensitivity propagation.
SimOutput run_engine(const Scenario& scenario, const ControllerParams* params,
                     const SampledControl* open_loop, const SimOptions& options,
                     EngineSensOutput* sens);

std::optional<Event> first_event(const Scenario& scenario, const ControllerParams& params,
                                 const SimOptions& options, double window_end);

}  // namespace pm::detail

#endif  // PM_ENGINE_HPP
