#include "pm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "pm/parallel.hpp"

namespace pm {

namespace {

double clamp01_box(double v, double lo, double hi) { return std::clamp(v, lo, hi); }

}  // namespace

std::vector<double> feasible_direction_alpha(std::span<const double> alpha,
                                             std::span<const double> grad_alpha) {
  const std::size_t M = alpha.size();
  if (grad_alpha.size() != M) throw std::invalid_argument("gradient size mismatch");
  double sum = 0.0;
  for (double a : alpha) {
    if (!(a >= -kSimplexTol && a <= 1.0 + kSimplexTol))
      throw std::invalid_argument("alpha outside [0, 1]");
    sum += a;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("alpha not on the simplex");

  std::vector<double> p(M, 0.0);
  if (M == 1) return p;  // box [-a, 1-a] with sum p = 0 pins p = 0

  // p_i(lambda) = clamp(-g_i - lambda, -alpha_i, 1 - alpha_i); sum p is
  // continuous and nonincreasing in lambda, so bisect then polish on the
  // identified active set.
  auto eval = [&](double lambda) {
    double s = 0.0;
    for (std::size_t i = 0; i < M; ++i)
      s += clamp01_box(-grad_alpha[i] - lambda, -alpha[i], 1.0 - alpha[i]);
    return s;
  };
  double lo = -grad_alpha[0], hi = -grad_alpha[0];
  for (std::size_t i = 0; i < M; ++i) {
    lo = std::min(lo, -grad_alpha[i] - 2.0);
    hi = std::max(hi, -grad_alpha[i] + 2.0);
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (eval(mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  double lambda = 0.5 * (lo + hi);

  // exact multiplier on the free set
  double clamped_sum = 0.0;
  std::size_t free_count = 0;
  double free_g_sum = 0.0;
  for (std::size_t i = 0; i < M; ++i) {
    const double raw = -grad_alpha[i] - lambda;
    if (raw <= -alpha[i])
      clamped_sum += -alpha[i];
    else if (raw >= 1.0 - alpha[i])
      clamped_sum += 1.0 - alpha[i];
    else {
      ++free_count;
      free_g_sum += -grad_alpha[i];
    }
  }
  if (free_count > 0) lambda = (free_g_sum + clamped_sum) / static_cast<double>(free_count);
  for (std::size_t i = 0; i < M; ++i)
    p[i] = clamp01_box(-grad_alpha[i] - lambda, -alpha[i], 1.0 - alpha[i]);

  // distribute any residual over the free components so sum p = 0 exactly
  double resid = 0.0;
  for (double v : p) resid += v;
  if (free_count > 0 && resid != 0.0) {
    const double corr = resid / static_cast<double>(free_count);
    for (std::size_t i = 0; i < M; ++i) {
      const double raw = -grad_alpha[i] - lambda;
      if (raw > -alpha[i] && raw < 1.0 - alpha[i]) p[i] -= corr;
    }
  }
  return p;
}

std::vector<double> feasible_direction_full(const ControllerParams& params,
                                            const Scenario& scenario,
                                            std::span<const double> grad) {
  const ParamLayout lay = ParamLayout::of(params, scenario);
  if (grad.size() != lay.total()) throw std::invalid_argument("gradient size mismatch");
  std::vector<double> dir(lay.total(), 0.0);
  for (std::size_t d = 0; d < lay.total(); ++d) dir[d] = -grad[d];

  for (std::size_t j = 0; j < lay.num_agents; ++j) {
    for (std::size_t l = 0; l < lay.phases; ++l) {
      const auto& alpha = lay.variant == ControllerVariant::Optimal
                              ? params.optimal()[j].combinations[l].weights
                              : params.practical()[j].combinations[l].weights;
      std::vector<double> g(lay.num_targets);
      for (std::size_t i = 0; i < lay.num_targets; ++i)
        g[i] = grad[lay.alpha_index(j, l, i)];
      const auto p = feasible_direction_alpha(alpha, g);
      for (std::size_t i = 0; i < lay.num_targets; ++i)
        dir[lay.alpha_index(j, l, i)] = p[i];
    }
  }
  return dir;
}

namespace {

/// Trial point theta + eta * dir with phi clamped to [0, T]; alpha stays
/// feasible by construction for eta <= 1.
std::vector<double> trial_point(const ParamLayout& lay, std::span<const double> theta,
                                std::span<const double> dir, double eta, double T) {
  std::vector<double> out(theta.begin(), theta.end());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] += eta * dir[d];
  for (std::size_t j = 0; j < lay.num_agents; ++j)
    for (std::size_t l = 0; l < lay.phases; ++l) {
      double& phi = out[lay.phi_index(j, l)];
      phi = std::clamp(phi, 0.0, T);
      for (std::size_t i = 0; i < lay.num_targets; ++i) {
        double& a = out[lay.alpha_index(j, l, i)];
        a = std::clamp(a, 0.0, 1.0);  // guards rounding dust only
      }
    }
  return out;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

OptimizeResult optimize(const Scenario& scenario, const ControllerParams& initial,
                        const DescentConfig& config) {
  {
    const auto violations = validate_params(initial, scenario);
    if (!violations.empty())
      throw std::invalid_argument("infeasible initial parameters: " +
                                  violations.front().where + ": " +
                                  violations.front().what);
  }
  const ParamLayout lay = ParamLayout::of(initial, scenario);
  const double T = scenario.horizon;

  OptimizeResult result;
  result.params = initial;
  ControllerParams current = initial;
  std::vector<double> theta = lay.pack(current);

  SensitivityRun run = simulate_with_sensitivities(scenario, current, config.sim);
  double J = run.sim.cost;

  auto grad_norm = [](std::span<const double> g) {
    return std::sqrt(std::inner_product(g.begin(), g.end(), g.begin(), 0.0));
  };

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    const std::vector<double>& grad = run.report.gradient;
    const auto dir = feasible_direction_full(current, scenario, grad);

    IterateRecord rec;
    rec.iteration = iter;
    rec.params = current;
    rec.cost = J;
    rec.gradient_norm = grad_norm(grad);
    rec.excitation_flags = run.report.excitation_flags;

    if (inf_norm(dir) <= 1e-12) {
      result.iterates.push_back(std::move(rec));
      result.stop_reason = StopReason::Stationary;
      break;
    }

    // Armijo backtracking on the realized (projected) displacement
    double eta = config.initial_step;
    bool accepted = false;
    std::vector<double> theta_new;
    ControllerParams params_new = current;
    double J_new = J;
    int backtracks = 0;
    for (; backtracks <= config.max_backtracks; ++backtracks) {
      theta_new = trial_point(lay, theta, dir, eta, T);
      double directional = 0.0;
      for (std::size_t d = 0; d < theta.size(); ++d)
        directional += grad[d] * (theta_new[d] - theta[d]);
      if (directional < 0.0) {
        params_new = lay.unpack(theta_new, current);
        const SimOutput trial = simulate(scenario, params_new, config.sim);
        if (trial.cost <= J + config.armijo_c1 * directional) {
          J_new = trial.cost;
          accepted = true;
          break;
        }
      }
      eta *= config.backtrack_factor;
    }

    rec.step_length = accepted ? eta : 0.0;
    rec.backtracks = backtracks;
    result.iterates.push_back(std::move(rec));

    if (!accepted) {
      result.stop_reason = StopReason::BacktrackingExhausted;
      break;
    }

    const double improvement = J - J_new;
    current = params_new;
    theta = std::move(theta_new);
    J = J_new;
    run = simulate_with_sensitivities(scenario, current, config.sim);

    const bool stalled = improvement < config.stall_tolerance;
    if (stalled || iter + 1 == config.max_iterations) {
      IterateRecord last;
      last.iteration = iter + 1;
      last.params = current;
      last.cost = J;
      last.gradient_norm = grad_norm(run.report.gradient);
      last.excitation_flags = run.report.excitation_flags;
      result.iterates.push_back(std::move(last));
      result.stop_reason = stalled ? StopReason::Stalled : StopReason::MaxIterations;
      break;
    }
  }

  result.params = current;
  result.cost = J;
  return result;
}

OptimizeResult multistart_optimize(const Scenario& scenario,
                                   const std::vector<ControllerParams>& starts,
                                   const DescentConfig& config, int threads) {
  if (starts.empty()) throw std::invalid_argument("multistart needs at least one start");
  std::vector<OptimizeResult> results(starts.size());
  parallel_for(
      starts.size(), [&](std::size_t k) { results[k] = optimize(scenario, starts[k], config); },
      threads);
  std::size_t best = 0;
  for (std::size_t k = 1; k < results.size(); ++k)
    if (results[k].cost < results[best].cost) best = k;
  return std::move(results[best]);
}

}  // namespace pm
