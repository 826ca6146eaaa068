#ifndef PM_TARGETS_HPP
#define PM_TARGETS_HPP

#include <utility>
#include <variant>
#include <vector>

namespace pm {

struct StaticPath {
  double position = 0.0;
};

/// Piecewise-linear motion through (time, position) waypoints with strictly
/// increasing times starting at 0.
struct PiecewiseLinearPath {
  std::vector<double> times;
  std::vector<double> positions;
};

struct SinusoidPath {
  double offset = 0.0;
  double amplitude = 0.0;
  double angular_frequency = 0.0;
  double phase = 0.0;
};

/// Analytic description of a mobile target's path with exact position,
/// velocity, and position-integral queries.
class TargetTrajectory {
 public:
  static TargetTrajectory fixed(double position);
  static TargetTrajectory piecewise_linear(std::vector<std::pair<double, double>> waypoints);
  static TargetTrajectory sinusoid(double offset, double amplitude,
                                   double angular_frequency, double phase);

  double position(double t) const;

  /// Exact time derivative of position; the right-hand value at
  /// piecewise-linear breakpoints.
  double velocity(double t) const;

  /// Closed-form integral of position over [t1, t2].
  double position_integral(double t1, double t2) const;

  /// Interior times where the velocity jumps (piecewise-linear knots).
  std::vector<double> breakpoints() const;

  /// Upper bound on |velocity| over the trajectory's domain.
  double max_speed() const;

  /// Last time the trajectory is defined for (infinity unless piecewise-linear).
  double max_time() const;

  const std::variant<StaticPath, PiecewiseLinearPath, SinusoidPath>& path() const {
    return path_;
  }

 private:
  explicit TargetTrajectory(std::variant<StaticPath, PiecewiseLinearPath, SinusoidPath> p)
      : path_(std::move(p)) {}

  std::variant<StaticPath, PiecewiseLinearPath, SinusoidPath> path_;
};

}  // namespace pm

#endif  // PM_TARGETS_HPP
