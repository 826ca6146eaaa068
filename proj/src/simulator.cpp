#include "pm/simulator.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "dynamics_core.hpp"
#include "engine.hpp"
#include "pm/quadrature.hpp"

namespace pm {

const char* to_string(EventKind k) {
  switch (k) {
    case EventKind::SenseEnter: return "sense_enter";
    case EventKind::SenseExit: return "sense_exit";
    case EventKind::RHitsZero: return "r_hits_zero";
    case EventKind::ZExit: return "z_exit";
    case EventKind::ReachSwitchPoint: return "reach_switch_point";
    case EventKind::TrackPeriodEnd: return "track_period_end";
    case EventKind::SaturationCross: return "saturation_cross";
    case EventKind::IntegratorActivate: return "integrator_activate";
    case EventKind::TargetBreakpoint: return "target_breakpoint";
    case EventKind::HorizonEnd: return "horizon_end";
  }
  return "?";
}

double SampledControl::value(std::size_t agent, double t) const {
  const std::size_t n = cells();
  std::size_t k = static_cast<std::size_t>(std::max(0.0, std::floor(t / grid_step)));
  if (k >= n) k = n - 1;
  return values[agent][k];
}

SampledControl SampledControl::zeros(std::size_t num_agents, double T, double grid) {
  SampledControl c;
  c.grid_step = grid;
  const std::size_t n = static_cast<std::size_t>(std::ceil(T / grid - 1e-12));
  c.values.assign(num_agents, std::vector<double>(n, 0.0));
  return c;
}

}  // namespace pm

namespace pm::detail {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

enum class GuardType : std::uint8_t { Sense, Apex, RZero, ZExit, SatHi, SatLo, Activate };

// spec-fixed processing order for simultaneous events
int guard_priority(GuardType g) {
  switch (g) {
    case GuardType::Sense:
    case GuardType::Apex: return 1;
    case GuardType::RZero:
    case GuardType::ZExit: return 2;
    case GuardType::SatHi:
    case GuardType::SatLo: return 4;
    case GuardType::Activate: return 5;
  }
  return 9;
}

struct GuardHit {
  GuardType type;
  int i = -1;  // target
  int j = -1;  // agent
  double dt = 0.0;
  bool graze = false;
};

enum class FixedKind : std::uint8_t { Breakpoint, NoiseSample, GridEdge };

struct FixedStop {
  double t;
  FixedKind kind;
  int target = -1;
};

struct EarlyStop {};

class Engine {
 public:
  Engine(const Scenario& sc, const ControllerParams* cp, const SampledControl* ol,
         const SimOptions& opt, EngineSensOutput* sens)
      : sc_(sc), cp_(cp), ol_(ol), opt_(opt), sens_(sens) {
    T_ = sc.horizon;
    h_ = opt.resolved_step(T_);
    etol_ = opt.resolved_event_tolerance(T_);
    N_ = sc.num_agents();
    M_ = sc.num_targets();
    if (cp_) {
      variant_ = cp_->variant();
      L_ = cp_->phases();
      if (sens_) {
        layout_ = ParamLayout::of(*cp_, sc_);
        D_ = layout_.total();
      }
    }
    idx_ = StateIdx{N_, M_, D_};
  }

  SimOutput run() {
    init();
    record_sample();
    try {
      loop();
    } catch (const EarlyStop&) {
      // detect_events query: partial run is fine
    }
    log_event({t_, EventKind::HorizonEnd, -1, -1, -1}, {});
    finalize();
    return std::move(out_);
  }

  std::optional<Event> found_event() const { return found_event_; }
  void stop_on_first_event(double window_end) {
    stop_on_event_ = true;
    window_end_ = window_end;
  }

 private:
  // --- setup -------------------------------------------------------------

  void init() {
    x_.assign(idx_.size(), 0.0);
    for (std::size_t j = 0; j < N_; ++j) x_[idx_.s(j)] = sc_.agents[j].initial_position;
    for (std::size_t i = 0; i < M_; ++i) x_[idx_.R(i)] = sc_.targets[i].initial_uncertainty;

    frames_.assign(N_, AgentFrame{});
    ctrl_.assign(N_, AgentCtrl{});
    inZ_.assign(M_, 0);
    inside_.assign(M_ * N_, 0);
    side_.assign(M_ * N_, 0);
    ever_sensed_.assign(N_, 0);

    out_.agent_positions.assign(N_, {});
    out_.uncertainties.assign(M_, {});
    out_.controls.assign(N_, {});
    out_.target_positions.assign(M_, {});
    out_.integrators.assign(N_, {});

    grad_quad_ = D_ ? std::make_unique<SegmentQuadrature>(D_) : nullptr;

    setup_noise();
    setup_fixed_stops();

    // sensing membership at t = 0
    for (std::size_t i = 0; i < M_; ++i) {
      const double pos = sc_.targets[i].trajectory.position(0.0);
      for (std::size_t j = 0; j < N_; ++j) {
        const double g = pos - x_[idx_.s(j)];
        if (std::abs(g) < sc_.agents[j].sensing_range) {
          inside_[i * N_ + j] = 1;
          side_[i * N_ + j] = g >= 0.0 ? 1 : -1;
          ever_sensed_[j] = 1;
        }
      }
    }
    // zero-uncertainty set at t = 0
    for (std::size_t i = 0; i < M_; ++i) {
      if (x_[idx_.R(i)] <= kZeroBand) {
        const double P = joint_P(i, 0.0, x_.data());
        if (sc_.targets[i].growth_rate < sc_.targets[i].reduction_rate * P) {
          inZ_[i] = 1;
          x_[idx_.R(i)] = 0.0;
        }
      }
    }

    // t = 0 bracket: the paper's convention t_bar_0 = 0 marks the start of
    // every agent's schedule
    if (cp_) {
      for (std::size_t j = 0; j < N_; ++j)
        log_event({0.0, EventKind::TrackPeriodEnd, static_cast<int>(j), -1, 0}, {});
      for (std::size_t j = 0; j < N_; ++j) {
        if (variant_ == ControllerVariant::Optimal)
          start_optimal_phase(j, 0, std::vector<double>(D_, 0.0));
        else
          setup_practical(j);
        process_controller_schedule(j);
      }
    } else {
      for (std::size_t j = 0; j < N_; ++j) {
        frames_[j].kind = CtrlKind::OpenLoop;
        frames_[j].open_loop_u = ol_->value(j, 0.0);
      }
    }
  }

  void setup_noise() {
    noise_pos_.assign(M_, 0.0);
    noise_vel_.assign(M_, 0.0);
    if (!opt_.noise || !opt_.noise->enabled()) return;
    noise_on_ = true;
    const NoiseModel& nm = *opt_.noise;
    const std::size_t samples = static_cast<std::size_t>(std::ceil(T_ / nm.sample_interval)) + 1;
    std::mt19937_64 rng(nm.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    stream_.assign(M_, {});
    for (std::size_t i = 0; i < M_; ++i) {
      stream_[i].resize(samples);
      for (std::size_t k = 0; k < samples; ++k) stream_[i][k] = normal(rng);
    }
    apply_noise_sample(0);
  }

  void apply_noise_sample(std::size_t k) {
    const NoiseModel& nm = *opt_.noise;
    for (std::size_t i = 0; i < M_; ++i) {
      const double nu = stream_[i][std::min(k, stream_[i].size() - 1)];
      noise_pos_[i] = nm.position_noise_scale * nu;
      noise_vel_[i] = nm.velocity_noise_scale * nu;
    }
  }

  void setup_fixed_stops() {
    for (std::size_t i = 0; i < M_; ++i)
      for (double b : sc_.targets[i].trajectory.breakpoints())
        if (b > 0.0 && b < T_)
          fixed_.push_back({b, FixedKind::Breakpoint, static_cast<int>(i)});
    if (noise_on_) {
      const double dt = opt_.noise->sample_interval;
      for (std::size_t k = 1; k * dt < T_; ++k)
        fixed_.push_back({k * dt, FixedKind::NoiseSample, -1});
    }
    if (ol_) {
      for (std::size_t k = 1; k * ol_->grid_step < T_; ++k)
        fixed_.push_back({k * ol_->grid_step, FixedKind::GridEdge, -1});
    }
    std::stable_sort(fixed_.begin(), fixed_.end(),
                     [](const FixedStop& a, const FixedStop& b) { return a.t < b.t; });
  }

  // --- controller phase machinery -----------------------------------------

  struct AgentCtrl {
    std::size_t phase = 0;
    double t_arrival = kInf;
    double t_period_end = kInf;
    std::vector<double> period_ends;       // practical, cumulative
    std::vector<double> phase_start_tau;   // D
    std::vector<double> arrival_tau;       // D
  };

  const TrackingCombination& combo(std::size_t j, std::size_t l) const {
    return variant_ == ControllerVariant::Optimal ? cp_->optimal()[j].combinations[l]
                                                  : cp_->practical()[j].combinations[l];
  }

  void start_optimal_phase(std::size_t j, std::size_t l, std::vector<double> boundary_tau) {
    const auto& ap = cp_->optimal()[j];
    AgentCtrl& c = ctrl_[j];
    c.phase = l;
    c.phase_start_tau = std::move(boundary_tau);
    const double psi = ap.switching_points[l];
    const double s = x_[idx_.s(j)];
    frames_[j].kind = CtrlKind::Bang;
    frames_[j].dir = sgn(psi - s);
    frames_[j].phase = l;
    frames_[j].alpha = ap.combinations[l].weights.data();
    c.t_arrival = t_ + std::abs(psi - s);
    c.t_period_end = kInf;
  }

  void setup_practical(std::size_t j) {
    const auto& ap = cp_->practical()[j];
    AgentCtrl& c = ctrl_[j];
    c.period_ends.resize(L_);
    double acc = 0.0;
    for (std::size_t l = 0; l < L_; ++l) {
      acc += std::max(0.0, ap.durations[l]);
      c.period_ends[l] = acc;
    }
    c.phase = 0;
    enter_practical_period(j, 0, std::vector<double>(D_, 0.0), /*log_activation=*/true);
  }

  /// Puts agent j into tracking period l: integrator reset, saturation state
  /// from the new error, immediate integrator activation when the error is
  /// already small.
  void enter_practical_period(std::size_t j, std::size_t l, std::vector<double> boundary_tau,
                              bool log_activation) {
    const auto& ap = cp_->practical()[j];
    AgentCtrl& c = ctrl_[j];
    c.phase = l;
    c.phase_start_tau = boundary_tau;
    AgentFrame& f = frames_[j];
    f.phase = l;
    f.alpha = ap.combinations[l].weights.data();
    f.gain_p = ap.gain_p;
    f.gain_i = ap.gain_i;
    f.integrator_active = false;
    x_[idx_.I(j)] = 0.0;
    if (D_) std::fill(sens_row(idx_.Ip(j)), sens_row(idx_.Ip(j)) + D_, 0.0);

    const double e = detail_ctx().tracking_error(j, t_, x_.data());
    const double raw = ap.gain_p * e;
    if (std::abs(raw) > 1.0) {
      f.kind = CtrlKind::PracSat;
      f.dir = sgn(raw);
    } else {
      f.kind = CtrlKind::PracP;
      f.dir = 0.0;
    }
    if (std::abs(raw) <= ap.switch_tolerance) {
      f.integrator_active = true;
      f.kind = CtrlKind::PracPI;
      // I(t~) = 0 for every theta, and t~ equals the period boundary here:
      // I'(t~+) = -e(t~) * tau'
      if (D_) {
        double* Ip = sens_row(idx_.Ip(j));
        for (std::size_t d = 0; d < D_; ++d) Ip[d] = -e * c.phase_start_tau[d];
      }
      if (log_activation)
        log_event({t_, EventKind::IntegratorActivate, static_cast<int>(j), -1,
                   static_cast<int>(l) + 1},
                  c.phase_start_tau);
    }
  }

  // cascades all schedule transitions of agent j that are due exactly at t_
  void process_controller_schedule(std::size_t j) {
    if (!cp_) return;
    AgentCtrl& c = ctrl_[j];
    for (;;) {
      if (variant_ == ControllerVariant::Optimal) {
        if (t_ == c.t_arrival) {
          process_arrival(j);
          continue;
        }
        if (t_ == c.t_period_end) {
          process_period_end_optimal(j);
          continue;
        }
      } else {
        if (c.phase < L_ && c.period_ends[c.phase] < T_ && t_ == c.period_ends[c.phase]) {
          process_period_end_practical(j);
          continue;
        }
      }
      break;
    }
  }

  void process_arrival(std::size_t j) {
    const auto& ap = cp_->optimal()[j];
    AgentCtrl& c = ctrl_[j];
    AgentFrame& f = frames_[j];
    const std::size_t l = c.phase;
    const double gamma = f.dir;
    x_[idx_.s(j)] = ap.switching_points[l];  // arrival is exact by construction

    std::vector<double> tau;
    if (D_) {
      if (gamma != 0.0) {
        // endogenous guard psi_l - s = 0:
        // tau' = gamma * (dg/dtheta - s'(tau-)), dg/dpsi_l = 1
        tau.assign(D_, 0.0);
        const double* sp = sens_row(idx_.sp(j));
        for (std::size_t d = 0; d < D_; ++d) tau[d] = gamma * (-sp[d]);
        tau[layout_.psi_index(j, l)] += gamma;
      } else {
        // zero-length bang: the arrival time is the period boundary itself
        tau = c.phase_start_tau;
      }
    }

    const double f_pre = gamma;
    double v = 0.0;
    for (std::size_t i = 0; i < M_; ++i)
      v += f.alpha[i] * detail_ctx().view_velocity(i, t_);
    if (std::abs(v) > 1.0) {
      f.kind = CtrlKind::TrackSat;
      f.dir = sgn(v);
    } else {
      f.kind = CtrlKind::TrackVel;
      f.dir = 0.0;
    }
    const double f_post = std::clamp(v, -1.0, 1.0);
    if (D_) apply_velocity_jump(j, f_pre, f_post, tau);

    c.arrival_tau = tau;
    c.t_arrival = kInf;
    c.t_period_end = t_ + std::max(0.0, ap.durations[l]);
    log_event({t_, EventKind::ReachSwitchPoint, static_cast<int>(j), -1,
               static_cast<int>(l) + 1},
              std::move(tau));
  }

  void process_period_end_optimal(std::size_t j) {
    const auto& ap = cp_->optimal()[j];
    AgentCtrl& c = ctrl_[j];
    const std::size_t l = c.phase;

    std::vector<double> tau;
    if (D_) {
      // induced event tau_k = t_arrival + phi_l: inherits the arrival
      // derivative, plus dtau/dphi_l = 1
      tau = c.arrival_tau;
      tau[layout_.phi_index(j, l)] += 1.0;
    }
    const double f_pre = detail_ctx().control(j, t_, x_.data());
    c.t_period_end = kInf;
    if (l + 1 < L_) {
      start_optimal_phase(j, l + 1, tau);
      const double f_post = frames_[j].dir;  // next bang velocity
      if (D_) apply_velocity_jump(j, f_pre, f_post, tau);
    }
    // else: schedule exhausted, the tracking mode extends to T (no change)
    log_event({t_, EventKind::TrackPeriodEnd, static_cast<int>(j), -1,
               static_cast<int>(l) + 1},
              std::move(tau));
  }

  void process_period_end_practical(std::size_t j) {
    AgentCtrl& c = ctrl_[j];
    const std::size_t l = c.phase;

    std::vector<double> tau;
    if (D_) {
      // induced event at phi_1 + ... + phi_{l+1}
      tau.assign(D_, 0.0);
      for (std::size_t m = 0; m <= l; ++m) tau[layout_.phi_index(j, m)] = 1.0;
    }
    const double f_pre = detail_ctx().control(j, t_, x_.data());
    log_event({t_, EventKind::TrackPeriodEnd, static_cast<int>(j), -1,
               static_cast<int>(l) + 1},
              tau);
    if (l + 1 < L_) {
      enter_practical_period(j, l + 1, tau, /*log_activation=*/true);
      const double f_post = detail_ctx().control(j, t_, x_.data());
      if (D_) apply_velocity_jump(j, f_pre, f_post, tau);
    } else {
      c.phase = L_;  // schedule exhausted; the last mode extends to T
    }
  }

  void apply_velocity_jump(std::size_t j, double f_pre, double f_post,
                           const std::vector<double>& tau) {
    double* sp = sens_row(idx_.sp(j));
    const double df = f_pre - f_post;
    for (std::size_t d = 0; d < D_; ++d) sp[d] += df * tau[d];
  }

  // --- guards --------------------------------------------------------------

  double joint_P(std::size_t i, double t, const double* x) const {
    const double pos = sc_.targets[i].trajectory.position(t);
    double miss = 1.0;
    for (std::size_t j = 0; j < N_; ++j)
      miss *= 1.0 - monitoring(pos, x[idx_.s(j)], sc_.agents[j].sensing_range);
    return 1.0 - miss;
  }

  double guard_value(GuardType g, int i, int j, double t, const double* x) const {
    switch (g) {
      case GuardType::Sense:
        return std::abs(sc_.targets[i].trajectory.position(t) - x[idx_.s(j)]) -
               sc_.agents[j].sensing_range;
      case GuardType::Apex:
        return sc_.targets[i].trajectory.position(t) - x[idx_.s(j)];
      case GuardType::RZero:
        return x[idx_.R(i)];
      case GuardType::ZExit:
        return sc_.targets[i].growth_rate - sc_.targets[i].reduction_rate * joint_P(i, t, x);
      case GuardType::SatHi:
        return detail_ctx().raw_control(j, t, x) - 1.0;
      case GuardType::SatLo:
        return detail_ctx().raw_control(j, t, x) + 1.0;
      case GuardType::Activate: {
        const auto& ap = cp_->practical()[j];
        return std::abs(ap.gain_p * detail_ctx().tracking_error(j, t, x)) -
               ap.switch_tolerance;
      }
    }
    return 0.0;
  }

  int guard_side(GuardType g, int i, int j) const {
    switch (g) {
      case GuardType::Sense:
        return inside_[i * N_ + j] ? -1 : 1;
      case GuardType::Apex:
        return side_[i * N_ + j];
      case GuardType::RZero:
        return 1;
      case GuardType::ZExit:
        return -1;
      case GuardType::SatHi:
        return (frames_[j].kind == CtrlKind::PracSat || frames_[j].kind == CtrlKind::TrackSat) &&
                       frames_[j].dir > 0
                   ? 1
                   : -1;
      case GuardType::SatLo:
        return (frames_[j].kind == CtrlKind::PracSat || frames_[j].kind == CtrlKind::TrackSat) &&
                       frames_[j].dir < 0
                   ? -1
                   : 1;
      case GuardType::Activate:
        return 1;
    }
    return 1;
  }

  template <typename Fn>
  void for_each_active_guard(Fn&& fn) const {
    for (std::size_t i = 0; i < M_; ++i)
      for (std::size_t j = 0; j < N_; ++j) {
        fn(GuardType::Sense, static_cast<int>(i), static_cast<int>(j));
        if (inside_[i * N_ + j]) fn(GuardType::Apex, static_cast<int>(i), static_cast<int>(j));
      }
    for (std::size_t i = 0; i < M_; ++i)
      fn(inZ_[i] ? GuardType::ZExit : GuardType::RZero, static_cast<int>(i), -1);
    if (cp_) {
      for (std::size_t j = 0; j < N_; ++j) {
        const AgentFrame& f = frames_[j];
        const bool tracking = f.kind != CtrlKind::Bang;
        if (!tracking) continue;
        fn(GuardType::SatHi, -1, static_cast<int>(j));
        fn(GuardType::SatLo, -1, static_cast<int>(j));
        if (variant_ == ControllerVariant::Practical && !f.integrator_active)
          fn(GuardType::Activate, -1, static_cast<int>(j));
      }
    }
  }

  // state after a partial step of size m, cached per scan
  const double* probe(double m) {
    if (m == 0.0) return x_.data();
    probe_buf_.resize(x_.size());
    rk4_step(detail_ctx(), t_, m, x_, probe_buf_, scratch_);
    return probe_buf_.data();
  }

  /// Bisects the crossing of guard g within (0, h]; the guard is on `side` at
  /// 0 and on the other side at h.
  double bisect_crossing(GuardType g, int i, int j, double h, int side) {
    double a = 0.0, b = h;
    while (b - a > etol_) {
      const double m = 0.5 * (a + b);
      const double v = guard_value(g, i, j, t_ + m, probe(m));
      if (v * side > 0.0)
        a = m;
      else
        b = m;
    }
    return b;
  }

  /// Locates an interior extremum of the sensing guard via its time
  /// derivative; used for double crossings and grazing contacts.
  double bisect_extremum(int i, int j, double h, double dd0) {
    double a = 0.0, b = h;
    auto dd = [&](double m) {
      const double* x = probe(m);
      const double t = t_ + m;
      const double g = sc_.targets[i].trajectory.position(t) - x[idx_.s(j)];
      return sgn(g) * (sc_.targets[i].trajectory.velocity(t) -
                       detail_ctx().control(j, t, x));
    };
    while (b - a > etol_) {
      const double m = 0.5 * (a + b);
      if (dd(m) * dd0 > 0.0)
        a = m;
      else
        b = m;
    }
    return 0.5 * (a + b);
  }

  std::vector<GuardHit> scan_guards(double h, const std::vector<double>& trial) {
    std::vector<GuardHit> crossings;
    for_each_active_guard([&](GuardType g, int i, int j) {
      const int side = guard_side(g, i, j);
      const double v1 = guard_value(g, i, j, t_ + h, trial.data());
      // strict sign change only: a guard resting exactly on its manifold
      // (e.g. an agent parked on a target) is a sliding mode, not an event
      if (v1 * side < 0.0) {
        crossings.push_back({g, i, j, bisect_crossing(g, i, j, h, side), false});
        return;
      }
      if (g != GuardType::Sense) return;
      // interior dip/peak detection for near-tangent sensing geometry
      const double v0 = guard_value(g, i, j, t_, x_.data());
      const double bound = 1.0 + sc_.targets[i].trajectory.max_speed();
      if (std::min(std::abs(v0), std::abs(v1)) > 0.5 * h * bound) return;
      auto dd_at = [&](double t, const double* x) {
        const double gg = sc_.targets[i].trajectory.position(t) - x[idx_.s(j)];
        return sgn(gg) * (sc_.targets[i].trajectory.velocity(t) -
                          detail_ctx().control(j, t, x));
      };
      const double dd0 = dd_at(t_, x_.data());
      const double dd1 = dd_at(t_ + h, trial.data());
      if (!(dd0 * side < 0.0 && dd1 * side > 0.0)) return;  // no extremum toward boundary
      const double m_ext = bisect_extremum(i, j, h, dd0);
      const double v_ext = guard_value(g, i, j, t_ + m_ext, probe(m_ext));
      const double band = 1e-9 * sc_.agents[j].sensing_range;
      if (v_ext * side < 0.0) {
        // genuine double crossing; take the first one, the partner follows
        crossings.push_back({g, i, j, bisect_crossing(g, i, j, m_ext, side), false});
      } else if (std::abs(v_ext) <= band) {
        crossings.push_back({g, i, j, m_ext, true});
      }
    });
    if (crossings.empty()) return crossings;
    double first = kInf;
    for (const auto& c : crossings) first = std::min(first, c.dt);
    std::vector<GuardHit> cluster;
    for (auto& c : crossings)
      if (c.dt <= first + etol_) cluster.push_back(c);
    std::stable_sort(cluster.begin(), cluster.end(), [&](const GuardHit& a, const GuardHit& b) {
      const int pa = guard_priority(a.type), pb = guard_priority(b.type);
      if (pa != pb) return pa < pb;
      if (a.i != b.i) return a.i < b.i;
      return a.j < b.j;
    });
    // land at the earliest crossing
    for (auto& c : cluster) c.dt = first;
    return cluster;
  }

  void process_guard_hits(const std::vector<GuardHit>& hits) {
    for (const auto& hit : hits) {
      switch (hit.type) {
        case GuardType::Sense: {
          const std::size_t k = hit.i * N_ + hit.j;
          if (hit.graze) {
            // tangential contact: zero-length pair, membership unchanged
            if (inside_[k]) {
              log_event({t_, EventKind::SenseExit, hit.j, hit.i, -1}, {});
              log_event({t_, EventKind::SenseEnter, hit.j, hit.i, -1}, {});
            } else {
              log_event({t_, EventKind::SenseEnter, hit.j, hit.i, -1}, {});
              log_event({t_, EventKind::SenseExit, hit.j, hit.i, -1}, {});
            }
            break;
          }
          if (inside_[k]) {
            inside_[k] = 0;
            log_event({t_, EventKind::SenseExit, hit.j, hit.i, -1}, {});
          } else {
            inside_[k] = 1;
            const double g = sc_.targets[hit.i].trajectory.position(t_) - x_[idx_.s(hit.j)];
            side_[k] = g >= 0.0 ? 1 : -1;
            ever_sensed_[hit.j] = 1;
            log_event({t_, EventKind::SenseEnter, hit.j, hit.i, -1}, {});
          }
          // dynamics are continuous across the sensing boundary: no resets
          break;
        }
        case GuardType::Apex:
          side_[hit.i * N_ + hit.j] = -side_[hit.i * N_ + hit.j];
          break;  // silent split, only the R' dynamics change form
        case GuardType::RZero: {
          const std::size_t i = hit.i;
          x_[idx_.R(i)] = 0.0;
          std::vector<double> tau;
          if (D_) {
            const double f_pre =
                sc_.targets[i].growth_rate -
                sc_.targets[i].reduction_rate * joint_P(i, t_, x_.data());
            double* Rp = sens_row(idx_.Rp(i));
            if (f_pre < -1e-300) {
              tau.assign(D_, 0.0);
              for (std::size_t d = 0; d < D_; ++d) tau[d] = -Rp[d] / f_pre;
            }
            std::fill(Rp, Rp + D_, 0.0);  // R'(tau+) = 0 on the zero boundary
          }
          inZ_[i] = 1;
          log_event({t_, EventKind::RHitsZero, -1, hit.i, -1}, std::move(tau));
          break;
        }
        case GuardType::ZExit:
          inZ_[hit.i] = 0;
          // rate crosses zero continuously: R' stays (it is zero) and resumes
          log_event({t_, EventKind::ZExit, -1, hit.i, -1}, {});
          break;
        case GuardType::SatHi:
        case GuardType::SatLo: {
          AgentFrame& f = frames_[hit.j];
          const bool entering = f.kind != CtrlKind::PracSat && f.kind != CtrlKind::TrackSat;
          if (entering) {
            const double dir = hit.type == GuardType::SatHi ? 1.0 : -1.0;
            f.dir = dir;
            f.kind = (f.kind == CtrlKind::TrackVel) ? CtrlKind::TrackSat : CtrlKind::PracSat;
          } else {
            if (f.kind == CtrlKind::TrackSat) {
              f.kind = CtrlKind::TrackVel;
            } else {
              f.kind = f.integrator_active ? CtrlKind::PracPI : CtrlKind::PracP;
            }
            f.dir = 0.0;
          }
          // the control law is continuous at the saturation boundary
          log_event({t_, EventKind::SaturationCross, hit.j, -1,
                     static_cast<int>(frames_[hit.j].phase) + 1},
                    {});
          break;
        }
        case GuardType::Activate: {
          AgentFrame& f = frames_[hit.j];
          f.integrator_active = true;
          if (f.kind == CtrlKind::PracP) f.kind = CtrlKind::PracPI;
          std::vector<double> tau;
          if (D_) {
            // endogenous guard e(t) -+ eps/Kp = 0
            const double e = detail_ctx().tracking_error(hit.j, t_, x_.data());
            double edot = 0.0;
            for (std::size_t i = 0; i < M_; ++i)
              edot += f.alpha[i] * detail_ctx().view_velocity(i, t_);
            edot -= detail_ctx().control(hit.j, t_, x_.data());
            tau.assign(D_, 0.0);
            if (std::abs(edot) > 1e-12) {
              const double* sp = sens_row(idx_.sp(hit.j));
              for (std::size_t i = 0; i < M_; ++i)
                tau[layout_.alpha_index(hit.j, f.phase, i)] =
                    detail_ctx().view_position(i, t_);
              for (std::size_t d = 0; d < D_; ++d) tau[d] = -(tau[d] - sp[d]) / edot;
            }
            // I(t~) = 0 identically: I'(t~+) = -e(t~) * t~'
            double* Ip = sens_row(idx_.Ip(hit.j));
            for (std::size_t d = 0; d < D_; ++d) Ip[d] = -e * tau[d];
          }
          log_event({t_, EventKind::IntegratorActivate, hit.j, -1,
                     static_cast<int>(frames_[hit.j].phase) + 1},
                    std::move(tau));
          break;
        }
      }
    }
  }

  // --- main loop -----------------------------------------------------------

  struct Stop {
    double t = kInf;
    bool fixed = false;       // a fixed_ entry is due
    bool controller = false;  // an agent schedule time is due
  };

  Stop next_stop() const {
    Stop s;
    s.t = T_;
    if (fixed_idx_ < fixed_.size() && fixed_[fixed_idx_].t < s.t) s.t = fixed_[fixed_idx_].t;
    for (std::size_t j = 0; cp_ && j < N_; ++j) {
      const AgentCtrl& c = ctrl_[j];
      if (variant_ == ControllerVariant::Optimal) {
        if (c.t_arrival < s.t) s.t = c.t_arrival;
        if (c.t_period_end < s.t) s.t = c.t_period_end;
      } else if (c.phase < L_ && c.period_ends[c.phase] < T_ &&
                 c.period_ends[c.phase] > t_ && c.period_ends[c.phase] < s.t) {
        s.t = c.period_ends[c.phase];
      }
    }
    return s;
  }

  void loop() {
    std::vector<double> trial(x_.size());
    while (t_ < T_) {
      const Stop stop = next_stop();
      const bool targeting = stop.t - t_ <= h_;
      const double h = targeting ? stop.t - t_ : h_;
      if (h > 0.0) {
        rk4_step(detail_ctx(), t_, h, x_, trial, scratch_);
        auto hits = scan_guards(h, trial);
        if (!hits.empty()) {
          const double dt = hits.front().dt;
          rk4_step(detail_ctx(), t_, dt, x_, trial, scratch_);
          x_.swap(trial);
          t_ += dt;
          snap_zeroed_uncertainties(hits);
          record_sample();
          process_guard_hits(hits);
          process_all_scheduled_at_t();
          post_event_fixups();
          continue;
        }
        x_.swap(trial);
        t_ = targeting ? stop.t : t_ + h;
        record_sample();
      }
      if (t_ == stop.t) {
        process_all_scheduled_at_t();
        post_event_fixups();
      }
    }
  }

  void snap_zeroed_uncertainties(const std::vector<GuardHit>& hits) {
    for (const auto& hit : hits)
      if (hit.type == GuardType::RZero) x_[idx_.R(hit.i)] = 0.0;
  }

  void process_all_scheduled_at_t() {
    while (fixed_idx_ < fixed_.size() && fixed_[fixed_idx_].t == t_) {
      const FixedStop& fs = fixed_[fixed_idx_];
      switch (fs.kind) {
        case FixedKind::Breakpoint:
          log_event({t_, EventKind::TargetBreakpoint, -1, fs.target, -1}, {});
          break;
        case FixedKind::NoiseSample:
          apply_noise_sample(
              static_cast<std::size_t>(std::llround(t_ / opt_.noise->sample_interval)));
          break;
        case FixedKind::GridEdge:
          for (std::size_t j = 0; j < N_; ++j)
            frames_[j].open_loop_u = ol_->value(j, t_ + 0.5 * ol_->grid_step);
          break;
      }
      ++fixed_idx_;
    }
    for (std::size_t j = 0; cp_ && j < N_; ++j) process_controller_schedule(j);
  }

  // --- output --------------------------------------------------------------

  void record_sample() {
    out_.times.push_back(t_);
    double sumR = 0.0;
    for (std::size_t j = 0; j < N_; ++j) {
      out_.agent_positions[j].push_back(x_[idx_.s(j)]);
      out_.controls[j].push_back(detail_ctx().control(j, t_, x_.data()));
      out_.integrators[j].push_back(x_[idx_.I(j)]);
    }
    for (std::size_t i = 0; i < M_; ++i) {
      out_.uncertainties[i].push_back(x_[idx_.R(i)]);
      out_.target_positions[i].push_back(sc_.targets[i].trajectory.position(t_));
      sumR += x_[idx_.R(i)];
    }
    cost_quad_.add(t_, sumR);
    if (D_) {
      grad_col_sums(grad_buf_);
      grad_quad_->add(t_, grad_buf_);
      if (sens_->record_dense) record_dense_sample();
    }
  }

  void grad_col_sums(std::vector<double>& out) const {
    out.assign(D_, 0.0);
    for (std::size_t i = 0; i < M_; ++i) {
      const double* Rp = x_.data() + idx_.Rp(i);
      for (std::size_t d = 0; d < D_; ++d) out[d] += Rp[d];
    }
  }

  void record_dense_sample() {
    sens_->s_prime_samples.emplace_back(x_.begin() + idx_.sp(0),
                                        x_.begin() + idx_.sp(0) + N_ * D_);
    sens_->R_prime_samples.emplace_back(x_.begin() + idx_.Rp(0),
                                        x_.begin() + idx_.Rp(0) + M_ * D_);
    sens_->in_zero_samples.push_back(inZ_);
  }

  /// After any event processing at the current sample: refresh the displayed
  /// control/uncertainty values, and restart the quadrature segments (the
  /// gradient integrand may genuinely jump).
  void post_event_fixups() {
    for (std::size_t j = 0; j < N_; ++j) {
      out_.controls[j].back() = detail_ctx().control(j, t_, x_.data());
      out_.integrators[j].back() = x_[idx_.I(j)];
    }
    for (std::size_t i = 0; i < M_; ++i) out_.uncertainties[i].back() = x_[idx_.R(i)];
    cost_quad_.break_segment();
    if (D_) {
      sens_->segment_grads.push_back(grad_quad_->break_segment());
      grad_col_sums(grad_buf_);
      grad_quad_->reseed(t_, grad_buf_);
      if (sens_->record_dense && !sens_->R_prime_samples.empty()) {
        sens_->s_prime_samples.back().assign(x_.begin() + idx_.sp(0),
                                             x_.begin() + idx_.sp(0) + N_ * D_);
        sens_->R_prime_samples.back().assign(x_.begin() + idx_.Rp(0),
                                             x_.begin() + idx_.Rp(0) + M_ * D_);
        sens_->in_zero_samples.back() = inZ_;
      }
    }
    out_.quad_breaks.push_back(out_.times.size() - 1);
  }

  void log_event(Event e, std::vector<double> tau) {
    out_.events.push_back(e);
    if (D_) {
      if (tau.empty()) tau.assign(D_, 0.0);
      sens_->tau_log.push_back(std::move(tau));
    }
    if (out_.events.size() > opt_.max_events)
      throw SimulationError("event budget exceeded: Zeno-like chattering suspected");
    if (stop_on_event_ && e.time > 0.0 && e.kind != EventKind::HorizonEnd) {
      if (e.time <= window_end_) found_event_ = e;
      throw EarlyStop{};
    }
  }

  void finalize() {
    const double T = T_;
    out_.cost = cost_quad_.finish()[0] / T;
    out_.agent_ever_sensed = ever_sensed_;
    if (D_) {
      sens_->segment_grads.push_back(grad_quad_->break_segment());
      sens_->grad_integral = grad_quad_->finish();
      // collect final sensitivities
      SensitivityState& fs = sens_->final_sens;
      fs = SensitivityState::zeros(N_, M_, D_);
      std::copy(x_.begin() + idx_.sp(0), x_.begin() + idx_.sp(0) + N_ * D_,
                fs.s_prime.begin());
      std::copy(x_.begin() + idx_.Rp(0), x_.begin() + idx_.Rp(0) + M_ * D_,
                fs.R_prime.begin());
      std::copy(x_.begin() + idx_.Ip(0), x_.begin() + idx_.Ip(0) + N_ * D_,
                fs.integrator_prime.begin());
      fs.tau_prime = sens_->tau_log;
    }
  }

  // --- helpers -------------------------------------------------------------

  DynContext detail_ctx() const {
    DynContext ctx;
    ctx.scenario = &sc_;
    ctx.idx = idx_;
    ctx.layout = D_ ? &layout_ : nullptr;
    ctx.frames = frames_;
    ctx.in_zero = inZ_;
    ctx.pair_inside = inside_;
    ctx.pair_side = side_;
    if (noise_on_) {
      ctx.noise_pos = noise_pos_;
      ctx.noise_vel = noise_vel_;
    }
    return ctx;
  }

  double* sens_row(std::size_t offset) { return x_.data() + offset; }

  // --- members ---------------------------------------------------------------

  const Scenario& sc_;
  const ControllerParams* cp_;
  const SampledControl* ol_;
  SimOptions opt_;
  EngineSensOutput* sens_;

  double T_ = 0, h_ = 0, etol_ = 0;
  std::size_t N_ = 0, M_ = 0, L_ = 0, D_ = 0;
  ControllerVariant variant_ = ControllerVariant::Optimal;
  ParamLayout layout_;
  StateIdx idx_;

  double t_ = 0.0;
  std::vector<double> x_;
  std::vector<AgentFrame> frames_;
  std::vector<AgentCtrl> ctrl_;
  std::vector<std::uint8_t> inZ_;
  std::vector<std::uint8_t> inside_;
  std::vector<std::int8_t> side_;
  std::vector<std::uint8_t> ever_sensed_;

  bool noise_on_ = false;
  std::vector<std::vector<double>> stream_;
  std::vector<double> noise_pos_, noise_vel_;

  std::vector<FixedStop> fixed_;
  std::size_t fixed_idx_ = 0;

  SimOutput out_;
  SegmentQuadrature cost_quad_{1};
  std::unique_ptr<SegmentQuadrature> grad_quad_;
  std::vector<double> grad_buf_;
  std::vector<double> probe_buf_;
  std::vector<double> scratch_;

  bool stop_on_event_ = false;
  double window_end_ = kInf;
  std::optional<Event> found_event_;
};

}  // namespace

SimOutput run_engine(const Scenario& scenario, const ControllerParams* params,
                     const SampledControl* open_loop, const SimOptions& options,
                     EngineSensOutput* sens) {
  Engine e(scenario, params, open_loop, options, sens);
  return e.run();
}

std::optional<Event> first_event(const Scenario& scenario, const ControllerParams& params,
                                 const SimOptions& options, double window_end) {
  Engine e(scenario, &params, nullptr, options, nullptr);
  e.stop_on_first_event(window_end);
  e.run();
  return e.found_event();
}

}  // namespace pm::detail

namespace pm {

SimOutput simulate(const Scenario& scenario, const ControllerParams& params,
                   const SimOptions& options) {
  const auto violations = validate_params(params, scenario);
  if (!violations.empty())
    throw std::invalid_argument("infeasible controller parameters: " + violations.front().where +
                                ": " + violations.front().what);
  return detail::run_engine(scenario, &params, nullptr, options, nullptr);
}

SimOutput simulate_open_loop(const Scenario& scenario, const SampledControl& controls,
                             const SimOptions& options) {
  if (controls.values.size() != scenario.num_agents())
    throw std::invalid_argument("open-loop controls do not match the agent count");
  if (!(controls.grid_step > 0.0)) throw std::invalid_argument("grid_step must be > 0");
  for (const auto& row : controls.values)
    for (double u : row)
      if (!(u >= -1.0 && u <= 1.0))
        throw std::invalid_argument("open-loop control outside [-1, 1]");
  return detail::run_engine(scenario, nullptr, &controls, options, nullptr);
}

std::optional<Event> detect_events(const Scenario& scenario, const ControllerParams& params,
                                   double window_end, const SimOptions& options) {
  return detail::first_event(scenario, params, options, window_end);
}

}  // namespace pm
