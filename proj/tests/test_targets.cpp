#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "pm/targets.hpp"

using namespace pm;

namespace {

// adaptive Simpson, oracle for the closed-form position integrals
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double tol) {
  auto simpson = [&](double lo, double hi) {
    return (hi - lo) / 6.0 * (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi));
  };
  std::function<double(double, double, double, double)> rec =
      [&](double lo, double hi, double whole, double eps) {
        const double mid = 0.5 * (lo + hi);
        const double left = simpson(lo, mid), right = simpson(mid, hi);
        if (std::abs(left + right - whole) < 15.0 * eps)
          return left + right + (left + right - whole) / 15.0;
        return rec(lo, mid, left, eps / 2.0) + rec(mid, hi, right, eps / 2.0);
      };
  return rec(a, b, simpson(a, b), tol);
}

}  // namespace

TEST_CASE("static trajectory") {
  const auto traj = TargetTrajectory::fixed(3.0);
  CHECK(traj.position(0.0) == 3.0);
  CHECK(traj.position(17.3) == 3.0);
  CHECK(traj.velocity(5.0) == 0.0);
  CHECK(traj.position_integral(0.0, 2.0) == doctest::Approx(6.0));
  CHECK(traj.max_speed() == 0.0);
}

TEST_CASE("piecewise linear trajectory") {
  const auto traj = TargetTrajectory::piecewise_linear({{0.0, 0.0}, {10.0, 5.0}});
  CHECK(traj.position(4.0) == doctest::Approx(2.0));
  CHECK(traj.velocity(4.0) == doctest::Approx(0.5));
  CHECK(traj.position_integral(0.0, 10.0) == doctest::Approx(25.0));  // triangle
  CHECK(traj.max_time() == 10.0);

  const auto multi =
      TargetTrajectory::piecewise_linear({{0.0, 1.0}, {2.0, 3.0}, {5.0, 0.0}});
  CHECK(multi.velocity(1.0) == doctest::Approx(1.0));
  CHECK(multi.velocity(2.0) == doctest::Approx(-1.0));  // right-hand value at the knot
  CHECK(multi.breakpoints() == std::vector<double>{2.0});
  CHECK(multi.max_speed() == doctest::Approx(1.0));
}

TEST_CASE("piecewise linear validation") {
  CHECK_THROWS_AS(TargetTrajectory::piecewise_linear({{0.0, 0.0}}), std::invalid_argument);
  CHECK_THROWS_AS(TargetTrajectory::piecewise_linear({{0.0, 0.0}, {0.0, 1.0}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(TargetTrajectory::piecewise_linear({{1.0, 0.0}, {2.0, 1.0}}),
                  std::invalid_argument);
}

TEST_CASE("sinusoid trajectory") {
  const double pi = std::acos(-1.0);
  const auto traj = TargetTrajectory::sinusoid(1.0, 2.0, pi, 0.0);
  CHECK(traj.position(0.5) == doctest::Approx(3.0));  // 1 + 2 sin(pi/2)
  CHECK(traj.velocity(0.0) == doctest::Approx(2.0 * pi));
  CHECK(traj.max_speed() == doctest::Approx(2.0 * pi));
}

TEST_CASE("domain checks") {
  const auto traj = TargetTrajectory::piecewise_linear({{0.0, 0.0}, {10.0, 5.0}});
  CHECK_THROWS_AS(traj.position(-0.5), std::domain_error);
  CHECK_THROWS_AS(traj.position(10.5), std::domain_error);
  CHECK_THROWS_AS(traj.position_integral(2.0, 1.0), std::domain_error);
}

TEST_CASE("sinusoid integral matches adaptive quadrature") {
  const auto traj = TargetTrajectory::sinusoid(0.7, 1.9, 2.3, 0.4);
  auto f = [&](double t) { return traj.position(t); };
  const double q = adaptive_simpson(f, 0.3, 7.7, 1e-13);
  CHECK(traj.position_integral(0.3, 7.7) == doctest::Approx(q).epsilon(1e-10));
}

TEST_CASE("integral additivity and velocity consistency") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(0.0, 10.0);
  const auto pwl = TargetTrajectory::piecewise_linear(
      {{0.0, 1.0}, {3.0, -2.0}, {6.5, 4.0}, {10.0, 4.0}});
  const auto sin_traj = TargetTrajectory::sinusoid(0.0, 1.5, 0.9, 1.0);
  for (const auto& traj : {pwl, sin_traj}) {
    for (int k = 0; k < 50; ++k) {
      double a = uni(rng), b = uni(rng), c = uni(rng);
      if (a > b) std::swap(a, b);
      if (b > c) std::swap(b, c);
      if (a > b) std::swap(a, b);
      const double whole = traj.position_integral(a, c);
      const double split = traj.position_integral(a, b) + traj.position_integral(b, c);
      CHECK(whole == doctest::Approx(split).epsilon(1e-12));
    }
    // central differences of position vs velocity, away from knots
    for (int k = 0; k < 50; ++k) {
      const double t = 0.05 + 0.98 * uni(rng);
      bool near_knot = false;
      for (double b : traj.breakpoints())
        if (std::abs(t - b) < 1e-3) near_knot = true;
      if (near_knot) continue;
      const double h = 1e-6;
      const double fd = (traj.position(t + h) - traj.position(t - h)) / (2.0 * h);
      CHECK(fd == doctest::Approx(traj.velocity(t)).epsilon(1e-6));
    }
  }
}
