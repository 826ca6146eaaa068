#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pm/controllers.hpp"
#include "pm/oracle.hpp"
#include "pm/simulator.hpp"

using namespace pm;

namespace {

Scenario two_target_scenario(double T = 10.0) {
  return Scenario({AgentSpec(0.0, 1.0)},
                  {TargetSpec(1.0, 3.0, 1.0, TargetTrajectory::fixed(2.0)),
                   TargetSpec(1.0, 3.0, 1.0, TargetTrajectory::fixed(6.0))},
                  T, 0.5);
}

}  // namespace

TEST_CASE("optimal mode schedule: unit-speed arrival") {
  OptimalAgentParams p;
  p.switching_points = {2.0};
  p.combinations = {{{1.0, 0.0}}};
  p.durations = {1.0};
  const auto sc = two_target_scenario();
  const auto sched = optimal_mode_schedule(0.0, p, target_trajectories(sc), 10.0);
  REQUIRE(sched.size() == 2);
  CHECK(sched[0].kind == ModeKind::Bang);
  CHECK(sched[0].direction == 1.0);
  CHECK(sched[0].start == 0.0);
  CHECK(sched[0].end == doctest::Approx(2.0));
  CHECK(sched[1].kind == ModeKind::TrackVelocity);
  CHECK(sched[1].start == doctest::Approx(2.0));
  // the schedule extends the last mode to T
  CHECK(sched[1].end == doctest::Approx(10.0));
}

TEST_CASE("optimal mode schedule: zero-length bang") {
  OptimalAgentParams p;
  p.switching_points = {0.0};
  p.combinations = {{{1.0, 0.0}}};
  p.durations = {3.0};
  const auto sc = two_target_scenario();
  const auto sched = optimal_mode_schedule(0.0, p, target_trajectories(sc), 10.0);
  REQUIRE(sched.size() >= 2);
  CHECK(sched[0].kind == ModeKind::Bang);
  CHECK(sched[0].direction == 0.0);
  CHECK(sched[0].end == sched[0].start);
  CHECK(sched[1].start == 0.0);
}

TEST_CASE("optimal schedule covers [0, T] exactly and respects arrival identities") {
  const Scenario sc = random_scenario(21);
  const auto params = random_params(sc, ControllerVariant::Optimal, 3, 22);
  const auto& ap = params.optimal()[0];
  const auto sched =
      optimal_mode_schedule(sc.agents[0].initial_position, ap, target_trajectories(sc), sc.horizon);
  REQUIRE(!sched.empty());
  CHECK(sched.front().start == 0.0);
  CHECK(sched.back().end == doctest::Approx(sc.horizon));
  for (std::size_t k = 1; k < sched.size(); ++k)
    CHECK(sched[k].start == doctest::Approx(sched[k - 1].end));
}

TEST_CASE("practical control law") {
  PracticalAgentParams p;
  p.combinations = {{{1.0, 0.0}}};
  p.durations = {10.0};
  p.gain_p = 2.0;
  p.gain_i = 1.0;
  p.switch_tolerance = 0.3;
  const auto sc = two_target_scenario();

  // saturation clamp: e = 2.0 - (-0.5) = 2.5, Kp e = 5 -> u = 1
  auto r = practical_control(0.0, -0.5, 0.0, false, 0, p, target_trajectories(sc));
  CHECK(r.u == 1.0);
  CHECK(r.mode == PracticalMode::SaturatedPlus);

  // e = 0 with zero integrator: u = 0
  r = practical_control(0.0, 2.0, 0.0, true, 0, p, target_trajectories(sc));
  CHECK(r.u == 0.0);
  CHECK(r.mode == PracticalMode::ProportionalIntegral);

  // the integral part only enters once active
  r = practical_control(0.0, 1.9, 0.5, false, 0, p, target_trajectories(sc));
  CHECK(r.raw == doctest::Approx(2.0 * 0.1));
  r = practical_control(0.0, 1.9, 0.5, true, 0, p, target_trajectories(sc));
  CHECK(r.raw == doctest::Approx(2.0 * 0.1 + 0.5));
}

TEST_CASE("validate_params") {
  const auto sc = two_target_scenario();
  ControllerParams good;
  {
    std::vector<PracticalAgentParams> blocks(1);
    blocks[0].combinations = {{{0.5, 0.5}}};
    blocks[0].durations = {1.0};
    good.agents = std::move(blocks);
  }
  CHECK(validate_params(good, sc).empty());

  ControllerParams simplex_bad = good;
  simplex_bad.practical()[0].combinations[0].weights = {0.7, 0.7};
  const auto v1 = validate_params(simplex_bad, sc);
  REQUIRE(!v1.empty());
  CHECK(v1.front().what.find("sum") != std::string::npos);

  ControllerParams negative_phi = good;
  negative_phi.practical()[0].durations[0] = -0.1;
  CHECK(!validate_params(negative_phi, sc).empty());

  ControllerParams bad_gain = good;
  bad_gain.practical()[0].gain_p = 0.0;
  CHECK(!validate_params(bad_gain, sc).empty());
}

TEST_CASE("every control stays within the admissible set") {
  for (std::uint64_t seed : {101u, 102u, 103u}) {
    const Scenario sc = random_scenario(seed);
    for (auto variant : {ControllerVariant::Optimal, ControllerVariant::Practical}) {
      const auto params = random_params(sc, variant, 2, seed + 7);
      const SimOutput sim = simulate(sc, params);
      for (const auto& series : sim.controls)
        for (double u : series) {
          CHECK(u <= 1.0);
          CHECK(u >= -1.0);
        }
    }
  }
}

TEST_CASE("practical control is continuous within a tracking period") {
  const Scenario sc = two_target_scenario();
  ControllerParams params;
  {
    std::vector<PracticalAgentParams> blocks(1);
    blocks[0].combinations = {{{1.0, 0.0}}, {{0.0, 1.0}}};
    blocks[0].durations = {5.0, 5.0};
    blocks[0].gain_p = 5.0;
    blocks[0].gain_i = 1.0;
    blocks[0].switch_tolerance = 0.1;
    params.agents = std::move(blocks);
  }
  const SimOutput sim = simulate(sc, params);
  // largest control jump between adjacent samples away from the period switch
  for (std::size_t k = 1; k < sim.times.size(); ++k) {
    const double dt = sim.times[k] - sim.times[k - 1];
    if (dt <= 0.0) continue;
    if (std::abs(sim.times[k] - 5.0) < 0.02 || std::abs(sim.times[k - 1] - 5.0) < 0.02)
      continue;  // the period boundary itself may jump
    const double du = std::abs(sim.controls[0][k] - sim.controls[0][k - 1]);
    CHECK(du <= 10.0 * dt + 1e-9);  // bounded slew, no jumps
  }
}

TEST_CASE("vertex combination on a static target holds position during tracking") {
  const Scenario sc = two_target_scenario();
  ControllerParams params;
  {
    std::vector<OptimalAgentParams> blocks(1);
    blocks[0].switching_points = {2.0};
    blocks[0].combinations = {{{1.0, 0.0}}};
    blocks[0].durations = {8.0};
    params.agents = std::move(blocks);
  }
  const SimOutput sim = simulate(sc, params);
  for (std::size_t k = 0; k < sim.times.size(); ++k)
    if (sim.times[k] > 2.0 + 1e-9)
      CHECK(sim.agent_positions[0][k] == doctest::Approx(2.0).epsilon(1e-12));
}
