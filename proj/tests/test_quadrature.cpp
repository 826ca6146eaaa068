#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "pm/quadrature.hpp"

using namespace pm;

TEST_CASE("quad3 weights match Simpson on even spacing") {
  double w[3];
  quad3_weights(0.0, 0.5, 1.0, 0.0, 1.0, w);
  CHECK(w[0] == doctest::Approx(1.0 / 6.0));
  CHECK(w[1] == doctest::Approx(4.0 / 6.0));
  CHECK(w[2] == doctest::Approx(1.0 / 6.0));
}

TEST_CASE("streamed quadrature integrates cubics to high accuracy") {
  SegmentQuadrature q(1);
  auto f = [](double t) { return t * t * t - 2.0 * t + 1.0; };
  const int n = 100;
  for (int k = 0; k <= n; ++k) {
    const double t = 2.0 * k / n;
    q.add(t, f(t));
  }
  const double exact = 4.0 - 4.0 + 2.0;  // t^4/4 - t^2 + t over [0,2]
  CHECK(q.finish()[0] == doctest::Approx(exact).epsilon(1e-10));
}

TEST_CASE("odd interval counts and uneven spacing stay accurate") {
  SegmentQuadrature q(1);
  auto f = [](double t) { return std::sin(t); };
  // jittered grid with an odd interval count
  std::vector<double> ts;
  for (int k = 0; k <= 51; ++k)
    ts.push_back(1.31 * k / 51.0 + (k % 2 ? 0.004 : -0.003) * (k > 0 && k < 51));
  for (double t : ts) q.add(t, f(t));
  const double exact = 1.0 - std::cos(ts.back());
  CHECK(q.finish()[0] == doctest::Approx(exact).epsilon(1e-8));
}

TEST_CASE("segment breaks isolate kinks") {
  SegmentQuadrature q(1);
  auto f = [](double t) { return std::abs(t - 1.0); };  // kink at 1
  const int n = 40;
  for (int k = 0; k <= n; ++k) {
    const double t = 2.0 * k / n;
    q.add(t, f(t));
    if (t == 1.0) q.break_segment();
  }
  CHECK(q.finish()[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("break_segment returns the per-segment contribution") {
  SegmentQuadrature q(1);
  for (int k = 0; k <= 10; ++k) q.add(0.1 * k, 1.0);
  const auto first = q.break_segment();
  CHECK(first[0] == doctest::Approx(1.0));
  q.reseed(1.0, std::vector<double>{3.0});
  for (int k = 11; k <= 20; ++k) q.add(0.1 * k, 3.0);
  const auto second = q.break_segment();
  CHECK(second[0] == doctest::Approx(3.0));
}

TEST_CASE("vector-valued samples integrate componentwise") {
  SegmentQuadrature q(2);
  for (int k = 0; k <= 10; ++k) {
    const double t = 0.1 * k;
    const std::vector<double> v{t, 2.0 * t};
    q.add(t, v);
  }
  const auto total = q.finish();
  CHECK(total[0] == doctest::Approx(0.5));
  CHECK(total[1] == doctest::Approx(1.0));
}
