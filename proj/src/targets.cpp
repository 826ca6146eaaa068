#include "pm/targets.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pm {

namespace {

void check_time(double t, double max_t) {
  if (!(t >= 0.0) || t > max_t * (1.0 + 1e-12) + 1e-12)
    throw std::domain_error("trajectory query at t=" + std::to_string(t) +
                            " outside [0, " + std::to_string(max_t) + "]");
}

// index of the segment containing t: times[k] <= t < times[k+1]
std::size_t segment_of(const std::vector<double>& times, double t) {
  std::size_t lo = 0, hi = times.size() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (times[mid] <= t)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace

TargetTrajectory TargetTrajectory::fixed(double position) {
  return TargetTrajectory(StaticPath{position});
}

TargetTrajectory TargetTrajectory::piecewise_linear(
    std::vector<std::pair<double, double>> waypoints) {
  if (waypoints.size() < 2)
    throw std::invalid_argument("piecewise-linear trajectory needs at least two waypoints");
  PiecewiseLinearPath p;
  p.times.reserve(waypoints.size());
  p.positions.reserve(waypoints.size());
  for (const auto& [t, x] : waypoints) {
    if (!p.times.empty() && t <= p.times.back())
      throw std::invalid_argument("waypoint times must be strictly increasing");
    if (!std::isfinite(t) || !std::isfinite(x))
      throw std::invalid_argument("waypoints must be finite");
    p.times.push_back(t);
    p.positions.push_back(x);
  }
  if (p.times.front() != 0.0)
    throw std::invalid_argument("first waypoint time must be 0");
  return TargetTrajectory(std::move(p));
}

TargetTrajectory TargetTrajectory::sinusoid(double offset, double amplitude,
                                            double angular_frequency, double phase) {
  if (!std::isfinite(offset) || !std::isfinite(amplitude) ||
      !std::isfinite(angular_frequency) || !std::isfinite(phase))
    throw std::invalid_argument("sinusoid parameters must be finite");
  return TargetTrajectory(SinusoidPath{offset, amplitude, angular_frequency, phase});
}

double TargetTrajectory::position(double t) const {
  check_time(t, max_time());
  if (const auto* s = std::get_if<StaticPath>(&path_)) return s->position;
  if (const auto* p = std::get_if<PiecewiseLinearPath>(&path_)) {
    if (t >= p->times.back()) return p->positions.back();
    const std::size_t k = segment_of(p->times, t);
    const double w = (t - p->times[k]) / (p->times[k + 1] - p->times[k]);
    return p->positions[k] + w * (p->positions[k + 1] - p->positions[k]);
  }
  const auto& s = std::get<SinusoidPath>(path_);
  return s.offset + s.amplitude * std::sin(s.angular_frequency * t + s.phase);
}

double TargetTrajectory::velocity(double t) const {
  check_time(t, max_time());
  if (std::holds_alternative<StaticPath>(path_)) return 0.0;
  if (const auto* p = std::get_if<PiecewiseLinearPath>(&path_)) {
    if (t >= p->times.back()) return 0.0;
    const std::size_t k = segment_of(p->times, t);
    return (p->positions[k + 1] - p->positions[k]) / (p->times[k + 1] - p->times[k]);
  }
  const auto& s = std::get<SinusoidPath>(path_);
  return s.amplitude * s.angular_frequency * std::cos(s.angular_frequency * t + s.phase);
}

double TargetTrajectory::position_integral(double t1, double t2) const {
  if (t1 > t2) throw std::domain_error("position_integral requires t1 <= t2");
  check_time(t1, max_time());
  check_time(t2, max_time());
  if (const auto* s = std::get_if<StaticPath>(&path_)) return s->position * (t2 - t1);
  if (const auto* p = std::get_if<PiecewiseLinearPath>(&path_)) {
    // trapezoid areas, exact for linear segments
    double acc = 0.0;
    double a = t1;
    while (a < t2) {
      const std::size_t k = segment_of(p->times, a);
      const double b = std::min(t2, p->times[k + 1]);
      if (b <= a) {  // past the last waypoint (within tolerance)
        acc += p->positions.back() * (t2 - a);
        break;
      }
      const double mid = 0.5 * (a + b);
      const double w = (mid - p->times[k]) / (p->times[k + 1] - p->times[k]);
      const double pos_mid = p->positions[k] + w * (p->positions[k + 1] - p->positions[k]);
      acc += pos_mid * (b - a);
      if (b >= t2) break;
      a = b;
    }
    return acc;
  }
  const auto& s = std::get<SinusoidPath>(path_);
  const double c = s.offset * (t2 - t1);
  if (s.angular_frequency == 0.0)
    return c + s.amplitude * std::sin(s.phase) * (t2 - t1);
  return c - s.amplitude / s.angular_frequency *
                 (std::cos(s.angular_frequency * t2 + s.phase) -
                  std::cos(s.angular_frequency * t1 + s.phase));
}

std::vector<double> TargetTrajectory::breakpoints() const {
  if (const auto* p = std::get_if<PiecewiseLinearPath>(&path_))
    return std::vector<double>(p->times.begin() + 1, p->times.end() - 1);
  return {};
}

double TargetTrajectory::max_speed() const {
  if (std::holds_alternative<StaticPath>(path_)) return 0.0;
  if (const auto* p = std::get_if<PiecewiseLinearPath>(&path_)) {
    double m = 0.0;
    for (std::size_t k = 0; k + 1 < p->times.size(); ++k)
      m = std::max(m, std::abs((p->positions[k + 1] - p->positions[k]) /
                               (p->times[k + 1] - p->times[k])));
    return m;
  }
  const auto& s = std::get<SinusoidPath>(path_);
  return std::abs(s.amplitude * s.angular_frequency);
}

double TargetTrajectory::max_time() const {
  if (const auto* p = std::get_if<PiecewiseLinearPath>(&path_)) return p->times.back();
  return std::numeric_limits<double>::infinity();
}

}  // namespace pm
