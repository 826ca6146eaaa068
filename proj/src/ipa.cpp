#include "pm/ipa.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dynamics_core.hpp"
#include "engine.hpp"

namespace pm {

SensitivityState SensitivityState::zeros(std::size_t num_agents, std::size_t num_targets,
                                         std::size_t dim) {
  SensitivityState s;
  s.dim = dim;
  s.s_prime.assign(num_agents * dim, 0.0);
  s.R_prime.assign(num_targets * dim, 0.0);
  s.integrator_prime.assign(num_agents * dim, 0.0);
  return s;
}

bool GradientReport::any_excitation_flag() const {
  return std::any_of(excitation_flags.begin(), excitation_flags.end(),
                     [](std::uint8_t f) { return f != 0; });
}

SensitivityRun simulate_with_sensitivities(const Scenario& scenario,
                                           const ControllerParams& params,
                                           const SimOptions& options, bool record_dense) {
  const auto violations = validate_params(params, scenario);
  if (!violations.empty())
    throw std::invalid_argument("infeasible controller parameters: " +
                                violations.front().where + ": " + violations.front().what);

  detail::EngineSensOutput sens;
  sens.record_dense = record_dense;
  SensitivityRun run;
  run.sim = detail::run_engine(scenario, &params, nullptr, options, &sens);

  const ParamLayout layout = ParamLayout::of(params, scenario);
  const double T = scenario.horizon;

  run.report.gradient.resize(layout.total());
  for (std::size_t d = 0; d < layout.total(); ++d)
    run.report.gradient[d] = sens.grad_integral[d] / T;
  run.report.segment_contributions = std::move(sens.segment_grads);

  run.report.excitation_flags.assign(scenario.num_agents(), 0);
  for (std::size_t j = 0; j < scenario.num_agents(); ++j) {
    if (run.sim.agent_ever_sensed[j]) continue;
    bool zero_block = true;
    for (std::size_t d = layout.agent_begin(j); d < layout.agent_begin(j) + layout.per_agent();
         ++d)
      if (run.report.gradient[d] != 0.0) zero_block = false;
    run.report.excitation_flags[j] = zero_block ? 1 : 0;
  }

  run.sensitivities = std::move(sens.final_sens);
  run.s_prime_samples = std::move(sens.s_prime_samples);
  run.R_prime_samples = std::move(sens.R_prime_samples);
  run.in_zero_samples = std::move(sens.in_zero_samples);
  return run;
}

GradientReport gradient(const Scenario& scenario, const ControllerParams& params,
                        const SimOutput& sim, const SimOptions& options) {
  SensitivityRun run = simulate_with_sensitivities(scenario, params, options);
  if (run.sim.events.size() != sim.events.size() || run.sim.cost != sim.cost)
    throw std::invalid_argument(
        "provided SimOutput was not produced by these parameters/options");
  return std::move(run.report);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<detail::AgentFrame> frames_from_context(const SegmentContext& ctx,
                                                    ControllerVariant variant) {
  std::vector<detail::AgentFrame> frames(ctx.modes.size());
  for (std::size_t j = 0; j < ctx.modes.size(); ++j) {
    const auto& m = ctx.modes[j];
    detail::AgentFrame& f = frames[j];
    f.phase = m.phase;
    if (variant == ControllerVariant::Optimal) {
      const auto& ap = ctx.params->optimal()[j];
      f.alpha = ap.combinations[m.phase].weights.data();
      if (m.bang) {
        f.kind = detail::CtrlKind::Bang;
        f.dir = m.bang_dir;
      } else if (m.saturated) {
        f.kind = detail::CtrlKind::TrackSat;
        f.dir = m.sat_dir;
      } else {
        f.kind = detail::CtrlKind::TrackVel;
      }
    } else {
      const auto& ap = ctx.params->practical()[j];
      f.alpha = ap.combinations[m.phase].weights.data();
      f.gain_p = ap.gain_p;
      f.gain_i = ap.gain_i;
      f.integrator_active = m.integrator_active;
      if (m.saturated) {
        f.kind = detail::CtrlKind::PracSat;
        f.dir = m.sat_dir;
      } else {
        f.kind = m.integrator_active ? detail::CtrlKind::PracPI : detail::CtrlKind::PracP;
      }
    }
  }
  return frames;
}

}  // namespace

PropagateResult propagate_interval(const SensitivityState& sens, const SegmentContext& ctx) {
  if (!ctx.scenario || !ctx.params) throw std::invalid_argument("segment context incomplete");
  if (!(ctx.t1 >= ctx.t0)) throw std::invalid_argument("segment must have t1 >= t0");

  const std::size_t N = ctx.scenario->num_agents();
  const std::size_t M = ctx.scenario->num_targets();
  const ParamLayout layout = ParamLayout::of(*ctx.params, *ctx.scenario);
  const std::size_t D = layout.total();
  if (sens.dim != D) throw std::invalid_argument("sensitivity dimension mismatch");

  const detail::StateIdx idx{N, M, D};
  std::vector<double> x(idx.size(), 0.0);
  for (std::size_t j = 0; j < N; ++j) x[idx.s(j)] = ctx.s0[j];
  for (std::size_t i = 0; i < M; ++i) x[idx.R(i)] = ctx.R0[i];
  for (std::size_t j = 0; j < N; ++j) x[idx.I(j)] = ctx.I0.empty() ? 0.0 : ctx.I0[j];
  std::copy(sens.s_prime.begin(), sens.s_prime.end(), x.begin() + idx.sp(0));
  std::copy(sens.R_prime.begin(), sens.R_prime.end(), x.begin() + idx.Rp(0));
  std::copy(sens.integrator_prime.begin(), sens.integrator_prime.end(),
            x.begin() + idx.Ip(0));

  const auto frames = frames_from_context(ctx, ctx.params->variant());
  detail::DynContext dyn;
  dyn.scenario = ctx.scenario;
  dyn.idx = idx;
  dyn.layout = &layout;
  dyn.frames = frames;
  dyn.in_zero = ctx.in_zero_set;
  dyn.pair_inside = ctx.pair_inside;
  dyn.pair_side = ctx.pair_side;

  std::vector<double> next(x.size());
  std::vector<double> scratch;
  double t = ctx.t0;
  const double h = ctx.step > 0.0 ? ctx.step : 1e-3 * (ctx.t1 - ctx.t0);
  while (t < ctx.t1) {
    const double step = std::min(h, ctx.t1 - t);
    detail::rk4_step(dyn, t, step, x, next, scratch);
    x.swap(next);
    t = (step == ctx.t1 - t) ? ctx.t1 : t + step;
  }

  PropagateResult out;
  out.sens = SensitivityState::zeros(N, M, D);
  out.sens.tau_prime = sens.tau_prime;
  std::copy(x.begin() + idx.sp(0), x.begin() + idx.sp(0) + N * D, out.sens.s_prime.begin());
  std::copy(x.begin() + idx.Rp(0), x.begin() + idx.Rp(0) + M * D, out.sens.R_prime.begin());
  std::copy(x.begin() + idx.Ip(0), x.begin() + idx.Ip(0) + N * D,
            out.sens.integrator_prime.begin());
  out.s.assign(x.begin() + idx.s(0), x.begin() + idx.s(0) + N);
  out.R.assign(x.begin() + idx.R(0), x.begin() + idx.R(0) + M);
  out.I.assign(x.begin() + idx.I(0), x.begin() + idx.I(0) + N);
  return out;
}

EventResetResult apply_event_reset(const SensitivityState& sens, const EventResetInput& in) {
  const ParamLayout& lay = in.layout;
  const std::size_t D = lay.total();
  if (sens.dim != D) throw std::invalid_argument("sensitivity dimension mismatch");

  EventResetResult out;
  out.sens = sens;
  out.tau_prime.assign(D, 0.0);
  const Event& e = in.event;
  const std::size_t j = e.agent >= 0 ? static_cast<std::size_t>(e.agent) : 0;
  const std::size_t l = e.phase >= 1 ? static_cast<std::size_t>(e.phase - 1) : 0;

  auto velocity_jump = [&](std::span<const double> tau) {
    auto sp = out.sens.s_row(j);
    const double df = in.f_pre - in.f_post;
    for (std::size_t d = 0; d < D; ++d) sp[d] += df * tau[d];
  };

  switch (e.kind) {
    case EventKind::RHitsZero: {
      // tau' = -R'(tau-) / f_pre, then R'(tau+) = 0
      auto rp = out.sens.r_row(static_cast<std::size_t>(e.target));
      if (in.f_pre < 0.0)
        for (std::size_t d = 0; d < D; ++d) out.tau_prime[d] = -rp[d] / in.f_pre;
      std::fill(rp.begin(), rp.end(), 0.0);
      break;
    }
    case EventKind::ReachSwitchPoint: {
      if (in.bang_dir != 0.0) {
        auto sp = sens.s_row(j);
        for (std::size_t d = 0; d < D; ++d) out.tau_prime[d] = in.bang_dir * (-sp[d]);
        out.tau_prime[lay.psi_index(j, l)] += in.bang_dir;
      } else if (!in.arrival_tau_prime.empty()) {
        out.tau_prime = in.arrival_tau_prime;  // zero-length bang: boundary chain
      }
      velocity_jump(out.tau_prime);
      break;
    }
    case EventKind::TrackPeriodEnd: {
      if (lay.variant == ControllerVariant::Optimal) {
        if (!in.arrival_tau_prime.empty()) out.tau_prime = in.arrival_tau_prime;
        out.tau_prime[lay.phi_index(j, l)] += 1.0;
      } else {
        for (std::size_t m = 0; m <= l; ++m) out.tau_prime[lay.phi_index(j, m)] = 1.0;
        // the integrator resets with the period
        auto ip = out.sens.i_row(j);
        std::fill(ip.begin(), ip.end(), 0.0);
      }
      velocity_jump(out.tau_prime);
      break;
    }
    case EventKind::IntegratorActivate: {
      // endogenous guard on the tracking error level set
      if (std::abs(in.error_rate) > 1e-12) {
        auto sp = sens.s_row(j);
        for (std::size_t d = 0; d < D; ++d) {
          const double gtheta = in.error_dtheta.empty() ? 0.0 : in.error_dtheta[d];
          out.tau_prime[d] = -(gtheta - sp[d]) / in.error_rate;
        }
      }
      auto ip = out.sens.i_row(j);
      for (std::size_t d = 0; d < D; ++d) ip[d] = -in.error_value * out.tau_prime[d];
      break;
    }
    case EventKind::SenseEnter:
    case EventKind::SenseExit:
    case EventKind::ZExit:
    case EventKind::SaturationCross:
    case EventKind::TargetBreakpoint:
    case EventKind::HorizonEnd:
      break;  // dynamics continuous (or exogenous): sensitivities pass through
  }
  return out;
}

}  // namespace pm
