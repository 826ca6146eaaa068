// Benchmarks the batch kernels (finite-difference gradients, Monte Carlo
// repetitions) serial vs OpenMP. A single event-driven run is inherently
// sequential; the parallelism lives at the granularity of independent runs.
#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "pm/oracle.hpp"
#include "pm/parallel.hpp"

namespace {

double time_ms(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

}  // namespace

int main() {
  using namespace pm;
  const int max_threads = hardware_threads();
  std::printf("threads available: %d\n\n", max_threads);

  // finite-difference gradient batch: 2D+1 independent simulations
  {
    const Scenario sc = random_scenario(42);
    const ControllerParams params =
        random_params(sc, ControllerVariant::Practical, 3, 43);
    volatile double sink = 0.0;
    const double serial = time_ms([&] {
      const auto fd = finite_diff_gradient(sc, params, 1e-5, {}, 1);
      sink = sink + fd.gradient[0];
    });
    const double parallel = time_ms([&] {
      const auto fd = finite_diff_gradient(sc, params, 1e-5, {}, 0);
      sink = sink + fd.gradient[0];
    });
    std::printf("finite-difference gradient   serial %8.1f ms   omp %8.1f ms   speedup %.2fx\n",
                serial, parallel, serial / parallel);
  }

  // Monte Carlo repetitions of a small noise experiment
  {
    const Scenario sc = random_scenario(7, {2, 2, 3, 3, 12.0, 12.0, 10.0});
    NoiseModel noise;
    noise.position_noise_scale = 0.2;
    noise.velocity_noise_scale = 0.2;
    DescentConfig cfg;
    cfg.max_iterations = 4;
    const std::size_t reps = 8;
    const double serial =
        time_ms([&] { run_noise_experiment(sc, noise, reps, 3, cfg, 5, 1); });
    const double parallel =
        time_ms([&] { run_noise_experiment(sc, noise, reps, 3, cfg, 5, 0); });
    std::printf("noise experiment (%zu reps)   serial %8.1f ms   omp %8.1f ms   speedup %.2fx\n",
                reps, serial, parallel, serial / parallel);
  }
  return 0;
}
