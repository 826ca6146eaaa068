#include "dynamics_core.hpp"

namespace pm::detail {

void eval_derivatives(const DynContext& ctx, double t, const double* x, double* dx) {
  const StateIdx& ix = ctx.idx;
  const std::size_t N = ix.N, M = ix.M, D = ix.D;
  const Scenario& sc = *ctx.scenario;

  // agent velocities
  for (std::size_t j = 0; j < N; ++j) dx[ix.s(j)] = ctx.control(j, t, x);

  // uncertainty rates; keep per-pair monitoring for reuse in the sensitivity block
  thread_local std::vector<double> p;
  p.assign(M * N, 0.0);
  for (std::size_t i = 0; i < M; ++i) {
    const double pos = ctx.true_position(i, t);
    double prod = 1.0;
    for (std::size_t j = 0; j < N; ++j) {
      const double pij = monitoring(pos, x[ix.s(j)], sc.agents[j].sensing_range);
      p[i * N + j] = pij;
      prod *= (1.0 - pij);
    }
    dx[ix.R(i)] = ctx.in_zero[i]
                      ? 0.0
                      : sc.targets[i].growth_rate - sc.targets[i].reduction_rate * (1.0 - prod);
  }

  // practical integrator accumulates the tracking error once active
  for (std::size_t j = 0; j < N; ++j) {
    const AgentFrame& f = ctx.frames[j];
    const bool prac = f.kind == CtrlKind::PracP || f.kind == CtrlKind::PracPI ||
                      f.kind == CtrlKind::PracSat;
    dx[ix.I(j)] = (prac && f.integrator_active) ? ctx.tracking_error(j, t, x) : 0.0;
  }

  if (D == 0) return;
  const ParamLayout& lay = *ctx.layout;

  // s' rows
  for (std::size_t j = 0; j < N; ++j) {
    const AgentFrame& f = ctx.frames[j];
    double* dsp = dx + ix.sp(j);
    const double* sp = x + ix.sp(j);
    std::fill(dsp, dsp + D, 0.0);
    switch (f.kind) {
      case CtrlKind::Bang:
      case CtrlKind::TrackSat:
      case CtrlKind::PracSat:
      case CtrlKind::OpenLoop:
        break;  // control independent of state and parameters
      case CtrlKind::TrackVel:
        for (std::size_t i = 0; i < M; ++i)
          dsp[lay.alpha_index(j, f.phase, i)] = ctx.view_velocity(i, t);
        break;
      case CtrlKind::PracP:
      case CtrlKind::PracPI: {
        const double* Ip = x + ix.Ip(j);
        const bool pi = f.kind == CtrlKind::PracPI;
        for (std::size_t d = 0; d < D; ++d) {
          dsp[d] = -f.gain_p * sp[d];
          if (pi) dsp[d] += f.gain_i * Ip[d];
        }
        for (std::size_t i = 0; i < M; ++i)
          dsp[lay.alpha_index(j, f.phase, i)] += f.gain_p * ctx.view_position(i, t);
        break;
      }
    }
  }

  // I' rows: d/dt I' = d e / d theta = (direct alpha term) - s'
  for (std::size_t j = 0; j < N; ++j) {
    const AgentFrame& f = ctx.frames[j];
    double* dIp = dx + ix.Ip(j);
    const bool prac = f.kind == CtrlKind::PracP || f.kind == CtrlKind::PracPI ||
                      f.kind == CtrlKind::PracSat;
    if (!(prac && f.integrator_active)) {
      std::fill(dIp, dIp + D, 0.0);
      continue;
    }
    const double* sp = x + ix.sp(j);
    for (std::size_t d = 0; d < D; ++d) dIp[d] = -sp[d];
    for (std::size_t i = 0; i < M; ++i)
      dIp[lay.alpha_index(j, f.phase, i)] += ctx.view_position(i, t);
  }

  // R' rows: dR'_i = -B_i * sum_j dp_ij/ds_j * s'_j * prod_{l != j}(1 - p_il),
  // with dp/ds taken from the segment's inside/outside bookkeeping so kink
  // endpoints use the one-sided value of the incoming segment.
  for (std::size_t i = 0; i < M; ++i) {
    double* dRp = dx + ix.Rp(i);
    std::fill(dRp, dRp + D, 0.0);
    if (ctx.in_zero[i]) continue;
    for (std::size_t j = 0; j < N; ++j) {
      if (!ctx.pair_inside[i * N + j]) continue;
      const double dpds = static_cast<double>(ctx.pair_side[i * N + j]) /
                          sc.agents[j].sensing_range;
      double others = 1.0;
      for (std::size_t l = 0; l < N; ++l)
        if (l != j) others *= (1.0 - p[i * N + l]);
      const double coeff = -sc.targets[i].reduction_rate * dpds * others;
      const double* sp = x + ix.sp(j);
      for (std::size_t d = 0; d < D; ++d) dRp[d] += coeff * sp[d];
    }
  }
}

void rk4_step(const DynContext& ctx, double t, double h, std::span<const double> x,
              std::span<double> out, std::vector<double>& scratch) {
  const std::size_t n = x.size();
  scratch.resize(5 * n);
  double* k1 = scratch.data();
  double* k2 = k1 + n;
  double* k3 = k2 + n;
  double* k4 = k3 + n;
  double* tmp = k4 + n;

  eval_derivatives(ctx, t, x.data(), k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
  eval_derivatives(ctx, t + 0.5 * h, tmp, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
  eval_derivatives(ctx, t + 0.5 * h, tmp, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
  eval_derivatives(ctx, t + h, tmp, k4);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace pm::detail
