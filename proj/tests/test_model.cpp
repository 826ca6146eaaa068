#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "pm/model.hpp"
#include "pm/oracle.hpp"
#include "pm/simulator.hpp"

using namespace pm;

TEST_CASE("monitoring kernel") {
  CHECK(monitoring(2.0, 2.0, 1.0) == doctest::Approx(1.0));
  CHECK(monitoring(2.5, 2.0, 1.0) == doctest::Approx(0.5));
  CHECK(monitoring(5.0, 2.0, 1.0) == 0.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-10.0, 10.0);
  std::uniform_real_distribution<double> unir(0.1, 3.0);
  for (int k = 0; k < 200; ++k) {
    const double tp = uni(rng), ap = uni(rng), r = unir(rng);
    const double p = monitoring(tp, ap, r);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK((p == 0.0) == (std::abs(tp - ap) >= r));
  }
}

TEST_CASE("joint monitoring") {
  const std::vector<double> two{0.5, 0.5};
  CHECK(joint_monitoring(two) == doctest::Approx(0.75));
  const std::vector<double> single{0.37};
  CHECK(joint_monitoring(single) == doctest::Approx(0.37));
  const std::vector<double> full{1.0, 0.3};
  CHECK(joint_monitoring(full) == doctest::Approx(1.0));

  // monotone nondecreasing in every argument
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> p(3);
    for (double& v : p) v = uni(rng);
    const double base = joint_monitoring(p);
    const std::size_t bump = k % 3;
    std::vector<double> q = p;
    q[bump] = std::min(1.0, q[bump] + uni(rng) * (1.0 - q[bump]));
    CHECK(joint_monitoring(q) >= base - 1e-15);
  }
}

TEST_CASE("uncertainty rate and the zero set") {
  CHECK(uncertainty_rate(5.0, 1.0, 3.0, 0.0) == doctest::Approx(1.0));
  CHECK(uncertainty_rate(0.0, 1.0, 3.0, 0.5) == 0.0);
  CHECK(uncertainty_rate(0.0, 1.0, 3.0, 0.2) == doctest::Approx(0.4));
  // equality A = B P at the boundary flows through the second branch: rate 0
  CHECK(uncertainty_rate(0.0, 1.0, 2.0, 0.5) == 0.0);
  // never drives R below zero at the boundary
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int k = 0; k < 200; ++k) {
    const double A = 0.1 + uni(rng), B = A + uni(rng) * 3.0, P = uni(rng);
    CHECK(uncertainty_rate(0.0, A, B, P) >= 0.0);
    CHECK(uncertainty_rate(kZeroBand, A, B, P) >= 0.0);
  }
}

TEST_CASE("spec construction invariants") {
  CHECK_THROWS_AS(AgentSpec(0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(AgentSpec(0.0, -1.0), std::invalid_argument);
  CHECK_THROWS_AS(TargetSpec(0.0, 1.0, 0.0, TargetTrajectory::fixed(0.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(TargetSpec(1.0, 1.0, 0.0, TargetTrajectory::fixed(0.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(TargetSpec(1.0, 3.0, -0.1, TargetTrajectory::fixed(0.0)),
                  std::invalid_argument);
  CHECK_THROWS_AS(Scenario({}, {TargetSpec(1.0, 3.0, 0.0, TargetTrajectory::fixed(0.0))}, 1.0),
                  std::invalid_argument);
  // trajectory must span the horizon
  CHECK_THROWS_AS(
      Scenario({AgentSpec(0.0, 1.0)},
               {TargetSpec(1.0, 3.0, 0.0,
                           TargetTrajectory::piecewise_linear({{0.0, 0.0}, {5.0, 1.0}}))},
               10.0),
      std::invalid_argument);
}

TEST_CASE("cost on synthetic trajectories") {
  // constant uncertainty c on M targets integrates to M * c
  SimOutput sim;
  const double c = 0.8;
  for (int k = 0; k <= 100; ++k) sim.times.push_back(0.05 * k);
  sim.uncertainties.assign(3, std::vector<double>(101, c));
  CHECK(cost(sim) == doctest::Approx(3.0 * c).epsilon(1e-12));

  // pure growth R = A t over [0, T]: mean A T / 2
  SimOutput grow;
  const double A = 1.3, T = 7.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = T * k / 100.0;
    grow.times.push_back(t);
  }
  grow.uncertainties.assign(1, {});
  for (double t : grow.times) grow.uncertainties[0].push_back(A * t);
  CHECK(cost(grow) == doctest::Approx(A * T / 2.0).epsilon(1e-12));

  SimOutput empty;
  CHECK_THROWS_AS(cost(empty), std::invalid_argument);
}

TEST_CASE("simulated cost matches a dense fixed-step reference") {
  const Scenario sc = random_scenario(91);
  const ControllerParams params = random_params(sc, ControllerVariant::Practical, 2, 92);
  const SimOutput sim = simulate(sc, params);
  const double ref = brute_force_cost(sc, params, 1e-5 * sc.horizon);
  CHECK(sim.cost == doctest::Approx(ref).epsilon(1e-5));
}

TEST_CASE("assumption validation") {
  // two static targets far apart: both checks pass
  Scenario ok({AgentSpec(0.0, 1.0)},
              {TargetSpec(1.0, 3.0, 0.0, TargetTrajectory::fixed(0.0)),
               TargetSpec(1.0, 3.0, 0.0, TargetTrajectory::fixed(10.0))},
              5.0, 0.5);
  const auto rep = validate_assumptions(ok, 0.01);
  CHECK(rep.speed_ok);
  CHECK(rep.separation_ok);
  CHECK(rep.all_ok());

  // a fast target trips the speed check but is only a warning
  Scenario fast({AgentSpec(0.0, 1.0)},
                {TargetSpec(1.0, 3.0, 0.0,
                            TargetTrajectory::piecewise_linear({{0.0, 0.0}, {5.0, 7.5}}))},
                5.0, 0.5);
  const auto rep2 = validate_assumptions(fast, 0.01);
  CHECK_FALSE(rep2.speed_ok);
  CHECK(rep2.max_target_speed == doctest::Approx(1.5));
  CHECK(!rep2.warnings.empty());

  // crossing sinusoids: the reported minimum matches a fine scan
  const auto t1 = TargetTrajectory::sinusoid(0.0, 2.0, 0.4, 0.0);
  const auto t2 = TargetTrajectory::sinusoid(3.0, 2.0, 0.4, 3.14159);
  Scenario crossing({AgentSpec(0.0, 1.0)},
                    {TargetSpec(1.0, 3.0, 0.0, t1), TargetSpec(1.0, 3.0, 0.0, t2)}, 20.0,
                    0.5);
  const auto rep3 = validate_assumptions(crossing, 1e-3);
  CHECK_FALSE(rep3.separation_ok);
  double best = 1e30, best_t = 0.0;
  for (int k = 0; k <= 200000; ++k) {
    const double t = 20.0 * k / 200000.0;
    const double gap = std::abs(t1.position(t) - t2.position(t));
    if (gap < best) {
      best = gap;
      best_t = t;
    }
  }
  CHECK(rep3.min_separation == doctest::Approx(best).epsilon(1e-4));
  CHECK(rep3.min_separation_time == doctest::Approx(best_t).epsilon(1e-2));
}
