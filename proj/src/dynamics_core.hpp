// Shared extended-state dynamics used by the event-driven engine and by the
// standalone sensitivity-propagation entry points. The state vector is
//   [ s (N) | R (M) | I (N) | s' (N*D) | R' (M*D) | I' (N*D) ]
// with D = 0 when sensitivities are off. All mode decisions are frozen in the
// context; integration is only valid strictly between events.
#ifndef PM_DYNAMICS_CORE_HPP
#define PM_DYNAMICS_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pm/controllers.hpp"
#include "pm/model.hpp"

namespace pm::detail {

struct StateIdx {
  std::size_t N = 0, M = 0, D = 0;
  std::size_t s(std::size_t j) const { return j; }
  std::size_t R(std::size_t i) const { return N + i; }
  std::size_t I(std::size_t j) const { return N + M + j; }
  std::size_t sp(std::size_t j) const { return N + M + N + j * D; }
  std::size_t Rp(std::size_t i) const { return N + M + N + N * D + i * D; }
  std::size_t Ip(std::size_t j) const { return N + M + N + (N + M) * D + j * D; }
  std::size_t size() const { return N + M + N + (2 * N + M) * D; }
};

enum class CtrlKind : std::uint8_t {
  Bang,      // optimal full-speed travel (dir in {-1, 0, +1})
  TrackVel,  // optimal velocity matching, unsaturated
  TrackSat,  // optimal velocity matching clipped at +-1
  PracP,     // practical proportional tracking, unsaturated
  PracPI,    // practical PI tracking, unsaturated
  PracSat,   // practical control pinned at +-1
  OpenLoop,  // piecewise-constant playback
};

struct AgentFrame {
  CtrlKind kind = CtrlKind::Bang;
  double dir = 0.0;       // Bang / TrackSat / PracSat direction
  std::size_t phase = 0;  // 0-based tracking period
  bool integrator_active = false;
  double gain_p = 0.0, gain_i = 0.0;
  const double* alpha = nullptr;  // M weights of the current period
  double open_loop_u = 0.0;
};

/// Frozen smooth-segment context: everything the derivative evaluation needs
/// besides (t, x).
struct DynContext {
  const Scenario* scenario = nullptr;
  StateIdx idx;
  const ParamLayout* layout = nullptr;  // required when idx.D > 0
  std::span<const AgentFrame> frames;
  std::span<const std::uint8_t> in_zero;      // M
  std::span<const std::uint8_t> pair_inside;  // M*N, index i*N + j
  std::span<const std::int8_t> pair_side;     // M*N, sign(theta_i - s_j) while inside
  std::span<const double> noise_pos;          // M scaled held offsets; empty = none
  std::span<const double> noise_vel;          // M

  double true_position(std::size_t i, double t) const {
    return scenario->targets[i].trajectory.position(t);
  }
  double true_velocity(std::size_t i, double t) const {
    return scenario->targets[i].trajectory.velocity(t);
  }
  // controller's view (measurement noise enters here only)
  double view_position(std::size_t i, double t) const {
    return true_position(i, t) + (noise_pos.empty() ? 0.0 : noise_pos[i]);
  }
  double view_velocity(std::size_t i, double t) const {
    return true_velocity(i, t) + (noise_vel.empty() ? 0.0 : noise_vel[i]);
  }

  double tracking_error(std::size_t j, double t, const double* x) const {
    const AgentFrame& f = frames[j];
    double ref = 0.0;
    for (std::size_t i = 0; i < idx.M; ++i) ref += f.alpha[i] * view_position(i, t);
    return ref - x[idx.s(j)];
  }

  /// Unsaturated control expression of the current mode (K_p e + K_i I for
  /// practical, alpha' * velocity for optimal tracking).
  double raw_control(std::size_t j, double t, const double* x) const {
    const AgentFrame& f = frames[j];
    switch (f.kind) {
      case CtrlKind::Bang:
        return f.dir;
      case CtrlKind::TrackVel:
      case CtrlKind::TrackSat: {
        double v = 0.0;
        for (std::size_t i = 0; i < idx.M; ++i) v += f.alpha[i] * view_velocity(i, t);
        return v;
      }
      case CtrlKind::PracP:
      case CtrlKind::PracPI:
      case CtrlKind::PracSat: {
        double u = f.gain_p * tracking_error(j, t, x);
        if (f.integrator_active) u += f.gain_i * x[idx.I(j)];
        return u;
      }
      case CtrlKind::OpenLoop:
        return f.open_loop_u;
    }
    return 0.0;
  }

  double control(std::size_t j, double t, const double* x) const {
    return std::clamp(raw_control(j, t, x), -1.0, 1.0);
  }
};

void eval_derivatives(const DynContext& ctx, double t, const double* x, double* dx);

/// One classical RK4 step of size h; `out` may not alias `x`.
void rk4_step(const DynContext& ctx, double t, double h, std::span<const double> x,
              std::span<double> out, std::vector<double>& scratch);

}  // namespace pm::detail

#endif  // PM_DYNAMICS_CORE_HPP
