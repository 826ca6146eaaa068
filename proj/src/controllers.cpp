#include "pm/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pm {

namespace {

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double combination_position(const TrackingCombination& alpha,
                            std::span<const TargetTrajectory> targets, double t) {
  double x = 0.0;
  for (std::size_t i = 0; i < alpha.weights.size(); ++i)
    x += alpha.weights[i] * targets[i].position(t);
  return x;
}

double combination_velocity(const TrackingCombination& alpha,
                            std::span<const TargetTrajectory> targets, double t) {
  double v = 0.0;
  for (std::size_t i = 0; i < alpha.weights.size(); ++i)
    v += alpha.weights[i] * targets[i].velocity(t);
  return v;
}

}  // namespace

std::size_t ControllerParams::num_agents() const {
  return std::visit([](const auto& v) { return v.size(); }, agents);
}

std::size_t ControllerParams::phases() const {
  return std::visit([](const auto& v) { return v.empty() ? std::size_t{0} : v.front().phases(); },
                    agents);
}

ParamLayout ParamLayout::of(const ControllerParams& params, const Scenario& scenario) {
  ParamLayout l;
  l.variant = params.variant();
  l.num_agents = params.num_agents();
  l.num_targets = scenario.num_targets();
  l.phases = params.phases();
  return l;
}

std::size_t ParamLayout::psi_index(std::size_t j, std::size_t l) const {
  if (variant != ControllerVariant::Optimal)
    throw std::logic_error("psi_index only exists for the optimal variant");
  return agent_begin(j) + l;
}

std::size_t ParamLayout::alpha_index(std::size_t j, std::size_t l, std::size_t i) const {
  const std::size_t base =
      variant == ControllerVariant::Optimal ? agent_begin(j) + phases : agent_begin(j);
  return base + l * num_targets + i;
}

std::size_t ParamLayout::phi_index(std::size_t j, std::size_t l) const {
  const std::size_t base = variant == ControllerVariant::Optimal
                               ? agent_begin(j) + phases + phases * num_targets
                               : agent_begin(j) + phases * num_targets;
  return base + l;
}

std::vector<double> ParamLayout::pack(const ControllerParams& params) const {
  std::vector<double> theta(total(), 0.0);
  for (std::size_t j = 0; j < num_agents; ++j) {
    if (variant == ControllerVariant::Optimal) {
      const auto& a = params.optimal()[j];
      for (std::size_t l = 0; l < phases; ++l) {
        theta[psi_index(j, l)] = a.switching_points[l];
        theta[phi_index(j, l)] = a.durations[l];
        for (std::size_t i = 0; i < num_targets; ++i)
          theta[alpha_index(j, l, i)] = a.combinations[l].weights[i];
      }
    } else {
      const auto& a = params.practical()[j];
      for (std::size_t l = 0; l < phases; ++l) {
        theta[phi_index(j, l)] = a.durations[l];
        for (std::size_t i = 0; i < num_targets; ++i)
          theta[alpha_index(j, l, i)] = a.combinations[l].weights[i];
      }
    }
  }
  return theta;
}

ControllerParams ParamLayout::unpack(std::span<const double> theta,
                                     const ControllerParams& prototype) const {
  if (theta.size() != total()) throw std::invalid_argument("theta size mismatch");
  ControllerParams out = prototype;
  for (std::size_t j = 0; j < num_agents; ++j) {
    if (variant == ControllerVariant::Optimal) {
      auto& a = out.optimal()[j];
      for (std::size_t l = 0; l < phases; ++l) {
        a.switching_points[l] = theta[psi_index(j, l)];
        a.durations[l] = theta[phi_index(j, l)];
        for (std::size_t i = 0; i < num_targets; ++i)
          a.combinations[l].weights[i] = theta[alpha_index(j, l, i)];
      }
    } else {
      auto& a = out.practical()[j];
      for (std::size_t l = 0; l < phases; ++l) {
        a.durations[l] = theta[phi_index(j, l)];
        for (std::size_t i = 0; i < num_targets; ++i)
          a.combinations[l].weights[i] = theta[alpha_index(j, l, i)];
      }
    }
  }
  return out;
}

std::vector<ModePhase> optimal_mode_schedule(double agent_start,
                                             const OptimalAgentParams& params,
                                             std::span<const TargetTrajectory> targets,
                                             double T) {
  std::vector<ModePhase> out;
  double t = 0.0;
  double s = agent_start;
  const std::size_t L = params.phases();
  for (std::size_t l = 0; l < L && t < T; ++l) {
    const double psi = params.switching_points[l];
    const double dir = sgn(psi - s);
    const double arrive = t + std::abs(psi - s);
    // zero-length bang phases are kept so the schedule stays well ordered
    out.push_back({ModeKind::Bang, t, std::min(arrive, T), l + 1, dir});
    if (arrive >= T) return out;
    t = arrive;
    s = psi;

    const double tracking_end = std::min(t + params.durations[l], T);
    out.push_back({ModeKind::TrackVelocity, t, tracking_end, l + 1, 0.0});
    // end position of the tracking stretch; exact while |alpha' * vel| <= 1
    const auto& alpha = params.combinations[l];
    bool saturates = false;
    const int scan = 64;
    for (int k = 0; k <= scan; ++k) {
      const double tk = t + (tracking_end - t) * k / scan;
      if (std::abs(combination_velocity(alpha, targets, tk)) > 1.0) {
        saturates = true;
        break;
      }
    }
    if (!saturates) {
      for (std::size_t i = 0; i < alpha.weights.size(); ++i)
        s += alpha.weights[i] * (targets[i].position(tracking_end) - targets[i].position(t));
    } else {
      // fine-grid integration of the clamped tracking speed
      const int n = 20000;
      const double h = (tracking_end - t) / n;
      for (int k = 0; k < n; ++k) {
        const double v = combination_velocity(alpha, targets, t + (k + 0.5) * h);
        s += std::clamp(v, -1.0, 1.0) * h;
      }
    }
    t = tracking_end;
  }
  if (!out.empty() && out.back().end < T) out.back().end = T;  // extend the last mode
  return out;
}

PracticalControl practical_control(double t, double agent_pos, double integrator,
                                   bool integrator_active, std::size_t phase,
                                   const PracticalAgentParams& params,
                                   std::span<const TargetTrajectory> targets) {
  PracticalControl out;
  const auto& alpha = params.combinations[phase];
  out.error = combination_position(alpha, targets, t) - agent_pos;
  out.raw = params.gain_p * out.error + (integrator_active ? params.gain_i * integrator : 0.0);
  out.u = std::clamp(out.raw, -1.0, 1.0);
  if (out.raw > 1.0)
    out.mode = PracticalMode::SaturatedPlus;
  else if (out.raw < -1.0)
    out.mode = PracticalMode::SaturatedMinus;
  else
    out.mode = integrator_active ? PracticalMode::ProportionalIntegral
                                 : PracticalMode::Proportional;
  return out;
}

namespace {

void check_combination(const TrackingCombination& c, std::size_t M, const std::string& where,
                       std::vector<ParamViolation>& out) {
  if (c.weights.size() != M) {
    out.push_back({where, "combination has " + std::to_string(c.weights.size()) +
                              " weights, expected " + std::to_string(M)});
    return;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < c.weights.size(); ++i) {
    const double w = c.weights[i];
    if (!(w >= 0.0 && w <= 1.0))
      out.push_back({where + ".weights[" + std::to_string(i) + "]",
                     "weight " + std::to_string(w) + " outside [0, 1]"});
    sum += w;
  }
  if (std::abs(sum - 1.0) > kSimplexTol)
    out.push_back({where, "weights sum to " + std::to_string(sum) + ", expected 1"});
}

}  // namespace

std::vector<ParamViolation> validate_params(const ControllerParams& params,
                                            const Scenario& scenario) {
  std::vector<ParamViolation> out;
  const std::size_t M = scenario.num_targets();
  const double T = scenario.horizon;
  if (params.num_agents() != scenario.num_agents()) {
    out.push_back({"agents", "parameter list covers " + std::to_string(params.num_agents()) +
                                 " agents, scenario has " +
                                 std::to_string(scenario.num_agents())});
    return out;
  }
  const std::size_t L = params.phases();
  if (L == 0) {
    out.push_back({"agents", "controller needs at least one phase"});
    return out;
  }

  auto check_common = [&](const std::string& prefix, const auto& a) {
    if (a.phases() != L)
      out.push_back({prefix, "phase count differs across agents"});
    if (a.combinations.size() != a.durations.size())
      out.push_back({prefix, "combinations and durations differ in length"});
    for (std::size_t l = 0; l < a.combinations.size(); ++l)
      check_combination(a.combinations[l], M,
                        prefix + ".combinations[" + std::to_string(l) + "]", out);
    for (std::size_t l = 0; l < a.durations.size(); ++l) {
      const double phi = a.durations[l];
      if (!(phi >= 0.0) || phi > T)
        out.push_back({prefix + ".durations[" + std::to_string(l) + "]",
                       "duration " + std::to_string(phi) + " outside [0, T]"});
    }
  };

  if (params.variant() == ControllerVariant::Optimal) {
    for (std::size_t j = 0; j < params.optimal().size(); ++j) {
      const auto& a = params.optimal()[j];
      const std::string prefix = "agents[" + std::to_string(j) + "]";
      if (a.switching_points.size() != a.durations.size())
        out.push_back({prefix, "switching_points and durations differ in length"});
      for (std::size_t l = 0; l < a.switching_points.size(); ++l)
        if (!std::isfinite(a.switching_points[l]))
          out.push_back({prefix + ".switching_points[" + std::to_string(l) + "]",
                         "switching point must be finite"});
      check_common(prefix, a);
    }
  } else {
    for (std::size_t j = 0; j < params.practical().size(); ++j) {
      const auto& a = params.practical()[j];
      const std::string prefix = "agents[" + std::to_string(j) + "]";
      if (!(a.gain_p > 0.0))
        out.push_back({prefix + ".gain_p", "proportional gain must be > 0"});
      if (!(a.gain_i > 0.0))
        out.push_back({prefix + ".gain_i", "integral gain must be > 0"});
      if (!(a.switch_tolerance > 0.0 && a.switch_tolerance < 1.0))
        out.push_back({prefix + ".switch_tolerance", "tolerance must lie in (0, 1)"});
      check_common(prefix, a);
    }
  }
  return out;
}

}  // namespace pm
