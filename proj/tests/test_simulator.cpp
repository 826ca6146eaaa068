#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pm/canonical.hpp"
#include "pm/oracle.hpp"
#include "pm/simulator.hpp"

using namespace pm;

namespace {

ControllerParams dwell_at(double psi, double T, std::size_t num_targets = 1) {
  ControllerParams p;
  std::vector<OptimalAgentParams> blocks(1);
  blocks[0].switching_points = {psi};
  std::vector<double> w(num_targets, 0.0);
  w[0] = 1.0;
  blocks[0].combinations = {{w}};
  blocks[0].durations = {T};
  p.agents = std::move(blocks);
  return p;
}

bool has_event(const SimOutput& sim, EventKind kind) {
  return std::any_of(sim.events.begin(), sim.events.end(),
                     [&](const Event& e) { return e.kind == kind; });
}

const Event* find_event(const SimOutput& sim, EventKind kind) {
  for (const auto& e : sim.events)
    if (e.kind == kind) return &e;
  return nullptr;
}

}  // namespace

TEST_CASE("dwelling on a static target: closed-form cost") {
  // agent starts on the target; R decays at rate A - B = -2 until zero
  const double T = 5.0, R0 = 1.0;
  Scenario sc({AgentSpec(2.0, 1.0)}, {TargetSpec(1.0, 3.0, R0, TargetTrajectory::fixed(2.0))},
              T);
  const SimOutput sim = simulate(sc, dwell_at(2.0, T));
  const double t_zero = R0 / 2.0;
  CHECK(sim.cost == doctest::Approx(R0 * t_zero / 2.0 / T).epsilon(1e-9));
  const Event* hit = find_event(sim, EventKind::RHitsZero);
  REQUIRE(hit != nullptr);
  CHECK(hit->time == doctest::Approx(t_zero).epsilon(1e-7));
  // R stays pinned at zero afterwards
  for (std::size_t k = 0; k < sim.times.size(); ++k)
    if (sim.times[k] > t_zero + 1e-6) CHECK(sim.uncertainties[0][k] == 0.0);
}

TEST_CASE("agent out of range forever: pure growth cost") {
  const double T = 4.0;
  Scenario sc({AgentSpec(100.0, 1.0)},
              {TargetSpec(0.7, 2.0, 0.3, TargetTrajectory::fixed(0.0)),
               TargetSpec(1.1, 3.0, 0.0, TargetTrajectory::fixed(5.0))},
              T);
  const SimOutput sim = simulate(sc, dwell_at(100.0, T, 2));
  const double expected = (0.3 + 0.7 * T / 2.0) + (0.0 + 1.1 * T / 2.0);
  CHECK(sim.cost == doctest::Approx(expected).epsilon(1e-10));
  CHECK(sim.agent_ever_sensed[0] == 0);
}

TEST_CASE("random scenario cost matches the brute-force reference") {
  const Scenario sc = random_scenario(171, {2, 2, 3, 3, 8.0, 12.0, 10.0});
  for (auto variant : {ControllerVariant::Optimal, ControllerVariant::Practical}) {
    const auto params = random_params(sc, variant, 2, 172);
    const SimOutput sim = simulate(sc, params);
    const double ref = brute_force_cost(sc, params, 1e-5 * sc.horizon);
    CHECK(sim.cost == doctest::Approx(ref).epsilon(1e-5));
  }
}

TEST_CASE("detect_events: sensing entry at the predicted time") {
  Scenario sc({AgentSpec(0.0, 1.0)}, {TargetSpec(1.0, 3.0, 1.0, TargetTrajectory::fixed(3.0))},
              10.0);
  const auto ev = detect_events(sc, dwell_at(10.0, 10.0), 5.0);
  REQUIRE(ev.has_value());
  CHECK(ev->kind == EventKind::SenseEnter);
  CHECK(ev->time == doctest::Approx(2.0).epsilon(1e-9));
}

TEST_CASE("detect_events: uncertainty hits zero while dwelling") {
  Scenario sc({AgentSpec(2.0, 1.0)}, {TargetSpec(1.0, 3.0, 1.0, TargetTrajectory::fixed(2.0))},
              10.0);
  const auto ev = detect_events(sc, dwell_at(2.0, 10.0), 5.0);
  REQUIRE(ev.has_value());
  CHECK(ev->kind == EventKind::RHitsZero);
  CHECK(ev->time == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("sinusoid sensing times match a fine-grid bisection oracle") {
  // stationary agent, oscillating target sweeping through its sensing range;
  // the agent parks by velocity-matching a far-away static target
  const auto traj = TargetTrajectory::sinusoid(0.0, 3.0, 0.7, 0.3);
  Scenario sc2({AgentSpec(0.0, 1.0)},
               {TargetSpec(1.0, 3.0, 1.0, traj),
                TargetSpec(1.0, 3.0, 0.0, TargetTrajectory::fixed(50.0))},
               15.0);
  ControllerParams park = dwell_at(0.0, 15.0, 2);
  std::swap(park.optimal()[0].combinations[0].weights[0],
            park.optimal()[0].combinations[0].weights[1]);  // track the static one

  const SimOutput sim = simulate(sc2, park);
  // oracle: scan |theta(t)| - r for sign changes on a fine grid + bisection
  std::vector<double> expected;
  auto gap = [&](double t) { return std::abs(traj.position(t)) - 1.0; };
  const int n = 300000;
  double prev = gap(0.0);
  for (int k = 1; k <= n; ++k) {
    const double t = 15.0 * k / n;
    const double v = gap(t);
    if ((prev < 0.0) != (v < 0.0)) {
      double a = 15.0 * (k - 1) / n, b = t, fa = prev;
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (a + b);
        if ((gap(m) < 0.0) == (fa < 0.0))
          a = m;
        else
          b = m;
      }
      expected.push_back(0.5 * (a + b));
    }
    prev = v;
  }
  std::vector<double> got;
  for (const auto& e : sim.events)
    if (e.kind == EventKind::SenseEnter || e.kind == EventKind::SenseExit)
      got.push_back(e.time);
  REQUIRE(got.size() == expected.size());
  for (std::size_t k = 0; k < got.size(); ++k)
    CHECK(got[k] == doctest::Approx(expected[k]).epsilon(1e-7));
}

TEST_CASE("uncertainty stays nonnegative across random runs") {
  for (std::uint64_t seed = 300; seed < 310; ++seed) {
    const Scenario sc = random_scenario(seed);
    const auto variant =
        seed % 2 == 0 ? ControllerVariant::Optimal : ControllerVariant::Practical;
    const auto params = random_params(sc, variant, 2, seed * 13 + 1);
    const SimOutput sim = simulate(sc, params);
    for (const auto& series : sim.uncertainties)
      for (double R : series) CHECK(R >= 0.0);
  }
}

TEST_CASE("determinism: identical inputs give identical outputs") {
  const Scenario sc = random_scenario(55);
  const auto params = random_params(sc, ControllerVariant::Practical, 3, 56);
  SimOptions opt;
  opt.noise = NoiseModel{0.1, 0.1, 0.05, 99};
  const SimOutput a = simulate(sc, params, opt);
  const SimOutput b = simulate(sc, params, opt);
  CHECK(a.cost == b.cost);
  REQUIRE(a.times.size() == b.times.size());
  CHECK(std::equal(a.times.begin(), a.times.end(), b.times.begin()));
  for (std::size_t j = 0; j < a.agent_positions.size(); ++j)
    CHECK(std::equal(a.agent_positions[j].begin(), a.agent_positions[j].end(),
                     b.agent_positions[j].begin()));
  for (std::size_t i = 0; i < a.uncertainties.size(); ++i)
    CHECK(std::equal(a.uncertainties[i].begin(), a.uncertainties[i].end(),
                     b.uncertainties[i].begin()));
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t k = 0; k < a.events.size(); ++k) {
    CHECK(a.events[k].time == b.events[k].time);
    CHECK(a.events[k].same_kind(b.events[k]));
  }
}

TEST_CASE("halving the step changes the cost below the convergence tolerance") {
  for (std::uint64_t seed : {61u, 62u}) {
    const Scenario sc = random_scenario(seed);
    const auto params = random_params(
        sc, seed % 2 ? ControllerVariant::Practical : ControllerVariant::Optimal, 2,
        seed + 5);
    SimOptions coarse, fine;
    coarse.step = 1e-2;
    fine.step = 5e-3;
    const double Jc = simulate(sc, params, coarse).cost;
    const double Jf = simulate(sc, params, fine).cost;
    CHECK(std::abs(Jc - Jf) / std::max(1e-12, std::abs(Jf)) < 1e-6);
  }
}

TEST_CASE("event log is well ordered and bracketed") {
  const Scenario sc = random_scenario(77);
  const auto params = random_params(sc, ControllerVariant::Optimal, 3, 78);
  const SimOutput sim = simulate(sc, params);
  REQUIRE(!sim.events.empty());
  CHECK(sim.events.front().time == 0.0);
  CHECK(sim.events.back().kind == EventKind::HorizonEnd);
  CHECK(sim.events.back().time == sc.horizon);
  for (std::size_t k = 1; k < sim.events.size(); ++k)
    CHECK(sim.events[k].time >= sim.events[k - 1].time);
  CHECK(sim.times.front() == 0.0);
  CHECK(sim.times.back() == sc.horizon);
}

TEST_CASE("zero-length bang is represented explicitly") {
  Scenario sc({AgentSpec(2.0, 1.0)}, {TargetSpec(1.0, 3.0, 1.0, TargetTrajectory::fixed(2.0))},
              5.0);
  const SimOutput sim = simulate(sc, dwell_at(2.0, 5.0));
  const Event* reach = find_event(sim, EventKind::ReachSwitchPoint);
  REQUIRE(reach != nullptr);
  CHECK(reach->time == 0.0);
}

TEST_CASE("grazing contact is logged as a zero-length pair") {
  // tangent approach: sinusoid with minimum distance exactly the sensing range
  const auto traj = TargetTrajectory::sinusoid(2.0, 1.0, 1.0, 0.0);
  Scenario sc({AgentSpec(0.0, 1.0)},
              {TargetSpec(1.0, 3.0, 1.0, traj),
               TargetSpec(1.0, 3.0, 0.0, TargetTrajectory::fixed(-50.0))},
              6.0);
  ControllerParams park = dwell_at(0.0, 6.0, 2);
  std::swap(park.optimal()[0].combinations[0].weights[0],
            park.optimal()[0].combinations[0].weights[1]);
  const SimOutput sim = simulate(sc, park);
  const double t_star = 1.5 * std::acos(-1.0);  // sin = -1
  std::vector<const Event*> touches;
  for (const auto& e : sim.events)
    if ((e.kind == EventKind::SenseEnter || e.kind == EventKind::SenseExit) && e.target == 0)
      touches.push_back(&e);
  REQUIRE(touches.size() == 2);
  CHECK(touches[0]->kind == EventKind::SenseEnter);
  CHECK(touches[1]->kind == EventKind::SenseExit);
  CHECK(touches[0]->time == doctest::Approx(t_star).epsilon(1e-6));
  CHECK(std::abs(touches[1]->time - touches[0]->time) <= 1e-6);
}

TEST_CASE("event budget guards against chattering") {
  const Scenario sc = random_scenario(83);
  const auto params = random_params(sc, ControllerVariant::Practical, 3, 84);
  SimOptions opt;
  opt.max_events = 2;
  CHECK_THROWS_AS(simulate(sc, params, opt), SimulationError);
}

TEST_CASE("target breakpoints are logged") {
  Scenario sc({AgentSpec(0.0, 1.0)},
              {TargetSpec(1.0, 3.0, 1.0,
                          TargetTrajectory::piecewise_linear({{0.0, 3.0}, {2.0, 4.0}, {5.0, 2.0}}))},
              5.0);
  const SimOutput sim = simulate(sc, dwell_at(0.0, 5.0));
  const Event* bp = find_event(sim, EventKind::TargetBreakpoint);
  REQUIRE(bp != nullptr);
  CHECK(bp->time == 2.0);
  CHECK(bp->target == 0);
}

TEST_CASE("open-loop playback reproduces straight-line motion") {
  Scenario sc({AgentSpec(0.0, 1.0)}, {TargetSpec(1.0, 3.0, 0.0, TargetTrajectory::fixed(3.0))},
              4.0);
  SampledControl u = SampledControl::zeros(1, 4.0, 0.01);
  for (auto& v : u.values[0]) v = 0.6;
  const SimOutput sim = simulate_open_loop(sc, u);
  CHECK(sim.agent_positions[0].back() == doctest::Approx(2.4).epsilon(1e-12));
  // sensing starts once the agent crosses s = 2 (distance r from the target)
  const Event* enter = find_event(sim, EventKind::SenseEnter);
  REQUIRE(enter != nullptr);
  CHECK(enter->time == doctest::Approx(2.0 / 0.6).epsilon(1e-6));
}

TEST_CASE("replaying the logged optimal schedule reproduces the control signal") {
  const Scenario sc = random_scenario(88, {1, 1, 2, 3, 8.0, 12.0, 10.0});
  const auto params = random_params(sc, ControllerVariant::Optimal, 3, 89);
  const SimOutput sim = simulate(sc, params);
  const auto trajs = target_trajectories(sc);
  const auto sched = optimal_mode_schedule(sc.agents[0].initial_position,
                                           params.optimal()[0], trajs, sc.horizon);
  for (std::size_t k = 0; k < sim.times.size(); ++k) {
    const double t = sim.times[k];
    for (const auto& phase : sched) {
      if (t < phase.start + 1e-6 || t > phase.end - 1e-6) continue;
      double expected;
      if (phase.kind == ModeKind::Bang) {
        expected = phase.direction;
      } else {
        double v = 0.0;
        const auto& w = params.optimal()[0].combinations[phase.phase - 1].weights;
        for (std::size_t i = 0; i < w.size(); ++i) v += w[i] * trajs[i].velocity(t);
        expected = std::clamp(v, -1.0, 1.0);
      }
      CHECK(sim.controls[0][k] == doctest::Approx(expected).epsilon(1e-6));
    }
  }
}

TEST_CASE("integrator activation time matches bisection on the error level set") {
  Scenario sc({AgentSpec(0.0, 1.0)}, {TargetSpec(1.0, 3.0, 1.0, TargetTrajectory::fixed(4.0))},
              12.0);
  ControllerParams params;
  {
    std::vector<PracticalAgentParams> blocks(1);
    blocks[0].combinations = {{{1.0}}};
    blocks[0].durations = {12.0};
    blocks[0].gain_p = 2.0;
    blocks[0].gain_i = 1.0;
    blocks[0].switch_tolerance = 0.3;
    params.agents = std::move(blocks);
  }
  const SimOutput sim = simulate(sc, params);
  const Event* act = find_event(sim, EventKind::IntegratorActivate);
  REQUIRE(act != nullptr);
  // |Kp e(t)| = eps with e(t) = 4 - s(t); bisect on the sampled trajectory
  auto level = [&](double t) {
    // interpolate s(t) from samples
    const auto it = std::lower_bound(sim.times.begin(), sim.times.end(), t);
    const std::size_t hi = std::min<std::size_t>(it - sim.times.begin(), sim.times.size() - 1);
    const std::size_t lo = hi == 0 ? 0 : hi - 1;
    double s;
    if (sim.times[hi] == sim.times[lo])
      s = sim.agent_positions[0][lo];
    else {
      const double w = (t - sim.times[lo]) / (sim.times[hi] - sim.times[lo]);
      s = sim.agent_positions[0][lo] + w * (sim.agent_positions[0][hi] - sim.agent_positions[0][lo]);
    }
    return std::abs(2.0 * (4.0 - s)) - 0.3;
  };
  double a = 0.0, b = 12.0;
  for (int it = 0; it < 80; ++it) {
    const double m = 0.5 * (a + b);
    if (level(m) > 0.0)
      a = m;
    else
      b = m;
  }
  CHECK(act->time == doctest::Approx(0.5 * (a + b)).epsilon(1e-5));
}
