#include "pm/canonical.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace pm {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

constexpr double kInf = std::numeric_limits<double>::infinity();

// signed distance to the sensing boundary
double boundary_gap(const Scenario& sc, std::size_t i, const OpenLoopPath& path, double t,
                    std::size_t agent) {
  return std::abs(sc.targets[i].trajectory.position(t) - path.position(t)) -
         sc.agents[agent].sensing_range;
}

double bisect_time(double a, double b, const std::function<double(double)>& f, double fa) {
  for (int it = 0; it < 80 && b - a > 1e-13 * (1.0 + b); ++it) {
    const double m = 0.5 * (a + b);
    if (f(m) * fa > 0.0)
      a = m;
    else
      b = m;
  }
  return 0.5 * (a + b);
}

}  // namespace

OpenLoopPath::OpenLoopPath(const SampledControl& control, std::size_t agent,
                           double start_position)
    : control_(&control), agent_(agent) {
  const std::size_t n = control.cells();
  boundary_positions_.resize(n + 1);
  boundary_positions_[0] = start_position;
  for (std::size_t k = 0; k < n; ++k)
    boundary_positions_[k + 1] =
        boundary_positions_[k] + control.values[agent][k] * control.grid_step;
}

double OpenLoopPath::position(double t) const {
  const double g = control_->grid_step;
  const std::size_t n = control_->cells();
  if (t <= 0.0) return boundary_positions_[0];
  std::size_t k = static_cast<std::size_t>(std::floor(t / g));
  if (k >= n) k = n - 1;
  return boundary_positions_[k] + control_->values[agent_][k] * (t - k * g);
}

SensingDecomposition decompose_sensing_sequence(const SampledControl& u,
                                                const Scenario& scenario, std::size_t agent) {
  const double T = scenario.horizon;
  const double g = u.grid_step;
  OpenLoopPath path(u, agent, scenario.agents[agent].initial_position);

  // sensing intervals per target from grid sign changes, bisection-refined
  struct Interval {
    std::size_t target;
    double enter, exit;
  };
  std::vector<Interval> intervals;
  for (std::size_t i = 0; i < scenario.num_targets(); ++i) {
    auto gap = [&](double t) { return boundary_gap(scenario, i, path, t, agent); };
    double t_prev = 0.0;
    double v_prev = gap(0.0);
    double open_since = v_prev < 0.0 ? 0.0 : kInf;
    const std::size_t steps = static_cast<std::size_t>(std::ceil(T / g));
    for (std::size_t k = 1; k <= steps; ++k) {
      const double t = std::min(T, k * g);
      const double v = gap(t);
      const bool was_in = v_prev < 0.0, is_in = v < 0.0;
      if (was_in != is_in) {
        const double tc = bisect_time(t_prev, t, gap, v_prev);
        if (is_in)
          open_since = tc;
        else {
          intervals.push_back({i, open_since, tc});
          open_since = kInf;
        }
      }
      t_prev = t;
      v_prev = v;
    }
    if (open_since != kInf) intervals.push_back({i, open_since, T});
  }
  std::sort(intervals.begin(), intervals.end(),
            [](const Interval& a, const Interval& b) { return a.enter < b.enter; });

  SensingDecomposition out;
  out.sequence_bound =
      scenario.separation_margin > 0.0
          ? static_cast<std::size_t>(std::ceil(T / scenario.separation_margin))
          : 0;
  if (intervals.empty()) return out;

  // collapse consecutive repeats into the visited-target sequence
  struct Visit {
    std::size_t target;
    double first_enter;  // t_bar_max of the previous phase
    double last_exit;    // candidate for this phase's end boundary
  };
  std::vector<Visit> visits;
  for (const auto& iv : intervals) {
    if (!visits.empty() && visits.back().target == iv.target)
      visits.back().last_exit = iv.exit;
    else
      visits.push_back({iv.target, iv.enter, iv.exit});
  }

  double t_begin = 0.0;
  for (std::size_t l = 0; l < visits.size(); ++l) {
    double t_end;
    if (l + 1 == visits.size()) {
      t_end = T;
    } else {
      const double t_max = visits[l + 1].first_enter;  // earliest sensing of the next target
      double exit_before = -kInf;
      // last boundary crossing of the current target before t_max
      for (const auto& iv : intervals)
        if (iv.target == visits[l].target) {
          if (iv.exit < t_max) exit_before = std::max(exit_before, iv.exit);
          if (iv.enter < t_max) exit_before = std::max(exit_before, iv.enter);
        }
      if (exit_before == -kInf || exit_before < t_begin) {
        t_end = t_max;  // overlapping coverage: fall back to the next entry time
        out.fallback_used = true;
      } else {
        t_end = exit_before;
      }
    }
    out.phases.push_back({visits[l].target, t_begin, t_end});
    t_begin = t_end;
  }
  if (out.sequence_bound > 0 && out.phases.size() > out.sequence_bound)
    out.bound_holds = false;
  return out;
}

CanonicalizeResult canonicalize_interval(const SampledControl& u, std::size_t agent,
                                         std::size_t target, double t1, double t2,
                                         const Scenario& scenario) {
  const double g = u.grid_step;
  if (!(t2 > t1)) throw std::invalid_argument("canonicalize_interval needs t2 > t1");
  // rewrite only whole cells strictly inside (t1, t2); boundary-grazing cells
  // stay untouched so the control is unchanged outside the interval
  const std::size_t c1 = static_cast<std::size_t>(std::ceil(t1 / g - 1e-12));
  const std::size_t c2 = static_cast<std::size_t>(std::floor(t2 / g + 1e-12));
  if (c2 <= c1 + 1)
    throw std::invalid_argument("interval too short for the control grid");
  const double ta = c1 * g;
  const double tb = std::min(c2 * g, scenario.horizon);

  OpenLoopPath path(u, agent, scenario.agents[agent].initial_position);
  const auto& traj = scenario.targets[target].trajectory;

  // precondition: only `target` is sensed on the interval
  for (std::size_t k = c1; k <= c2; ++k) {
    const double t = std::min(k * g, tb);
    for (std::size_t i = 0; i < scenario.num_targets(); ++i)
      if (i != target && boundary_gap(scenario, i, path, t, agent) < 0.0)
        throw std::invalid_argument("agent senses another target on the interval");
  }

  const double s_a = path.position(ta);
  const double s_b = path.position(tb);
  const double gamma1 = sgn(traj.position(ta) - s_a);
  const double gamma2 = sgn(s_b - traj.position(tb));

  const std::size_t cells = c2 - c1;

  // earliest arrival: first root of s_a + gamma1 (t - ta) - theta(t) in [ta, tb]
  auto rho1 = [&](double t) { return s_a + gamma1 * (t - ta) - traj.position(t); };
  double t_arrive = kInf;
  if (rho1(ta) == 0.0) {
    t_arrive = ta;  // already at the target: track immediately
  } else {
    double t_prev = ta, v_prev = rho1(ta);
    for (std::size_t k = 1; k <= cells; ++k) {
      const double t = std::min(ta + k * g, tb);
      const double v = rho1(t);
      if (v == 0.0 || (v_prev < 0.0) != (v < 0.0)) {
        t_arrive = bisect_time(t_prev, t, rho1, v_prev);
        break;
      }
      t_prev = t;
      v_prev = v;
    }
  }

  // latest departure: last root of theta(t) + gamma2 (tb - t) - s_b in [ta, tb]
  auto rho2 = [&](double t) { return traj.position(t) + gamma2 * (tb - t) - s_b; };
  double t_depart = -kInf;
  if (rho2(tb) == 0.0) {
    t_depart = tb;
  } else {
    double t_next = tb, v_next = rho2(tb);
    for (std::size_t k = 1; k <= cells; ++k) {
      const double t = std::max(tb - static_cast<double>(k) * g, ta);
      const double v = rho2(t);
      if (v == 0.0 || (v_next < 0.0) != (v < 0.0)) {
        t_depart = bisect_time(t, t_next, rho2, v);
        break;
      }
      t_next = t;
      v_next = v;
    }
  }

  double t_check, t_hat;
  if (t_arrive <= t_depart) {
    t_check = t_arrive;
    t_hat = t_depart;
  } else {
    // target unreachable in time: drive toward it, then turn back to s_b
    t_check = std::clamp(0.5 * (gamma1 * (s_b - s_a) + ta + tb), ta, tb);
    t_hat = t_check;
  }

  // canonical trajectory, exactly reproducible at any time
  const double track_offset =
      (t_arrive <= t_depart) ? (s_a + gamma1 * (t_check - ta) - traj.position(t_check)) : 0.0;
  auto s_can = [&](double t) {
    if (t <= t_check) return s_a + gamma1 * (t - ta);
    if (t < t_hat) return traj.position(t) + track_offset;
    return s_b - gamma2 * (tb - t);
  };

  CanonicalizeResult out;
  out.control = u;
  out.t_check = t_check;
  out.t_hat = t_hat;
  out.t1_eff = ta;
  out.t2_eff = tb;
  // cell averages of the canonical trajectory keep every boundary position
  // exact and stay within the admissible control set
  for (std::size_t k = c1; k < c2; ++k) {
    const double a = k * g;
    const double b = std::min((k + 1) * g, tb);
    if (b <= a) break;
    const double v = (s_can(b) - s_can(a)) / (b - a);
    out.control.values[agent][k] = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

ImprovementCheck verify_improvement(const SampledControl& u, const SampledControl& u_prime,
                                    const Scenario& scenario, const SimOptions& options,
                                    double tolerance) {
  ImprovementCheck out;
  out.cost_before = simulate_open_loop(scenario, u, options).cost;
  out.cost_after = simulate_open_loop(scenario, u_prime, options).cost;
  out.improved = out.cost_after <= out.cost_before + tolerance;
  return out;
}

}  // namespace pm
