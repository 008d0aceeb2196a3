#include "ptune/sitstand.hpp"

#include <algorithm>
#include <cmath>
#include <spdlog/spdlog.h>

#include "ptune/error.hpp"
#include "ptune/polynomial.hpp"

namespace ptune {

std::string_view to_string(Direction direction) { return direction == Direction::rising ? "rising" : "lowering"; }

Direction direction_from_string(std::string_view name) {
  if (name == "rising" || name == "sit_to_stand") return Direction::rising;
  if (name == "lowering" || name == "stand_to_sit") return Direction::lowering;
  throw Error(ErrorCode::InvalidArgument, "unknown direction '" + std::string(name) + "'");
}

Direction direction_of(const Stride& motion) {
  double sum = 0.0;
  for (double v : motion.velocity.span()) sum += v;
  return sum < 0.0 ? Direction::rising : Direction::lowering;
}

double phase_from_thigh(double thigh_angle, double theta_sit, double theta_stand) {
  if (theta_sit == theta_stand) {
    throw Error(ErrorCode::DegenerateCalibration, "sitting and standing thigh angles coincide");
  }
  return std::clamp((thigh_angle - theta_sit) / (theta_stand - theta_sit), 0.0, 1.0);
}

double phase_from_thigh(double thigh_angle, const ThighCalibration& calibration) {
  return phase_from_thigh(thigh_angle, calibration.theta_sit, calibration.theta_stand);
}

double velocity_blend(double velocity, double relu_lo, double relu_hi) {
  if (!(relu_lo < relu_hi)) throw Error(ErrorCode::InvalidArgument, "velocity blend needs relu_lo < relu_hi");
  if (velocity <= relu_lo) return 0.0;
  if (velocity >= relu_hi) return 1.0;
  return (velocity - relu_lo) / (relu_hi - relu_lo);
}

double eval_sitstand_torque(const SitStandModel& model, double s, double angle, double velocity) {
  if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::PhaseOutOfRange, "phase " + std::to_string(s) + " outside [0, 1]");
  const double f = model.joint == Joint::knee ? velocity_blend(velocity, model.relu_lo, model.relu_hi) : 0.0;
  const double eq = poly::horner(model.e1, s) + f * poly::horner(model.e2, s);
  return impedance_torque(poly::horner(model.k, s), eq, poly::horner(model.b, s), angle, velocity);
}

ScalingSchedule::ScalingSchedule(double sit_to_stand_scale, double stand_to_sit_scale, double blend_width)
    : rising_(sit_to_stand_scale), lowering_(stand_to_sit_scale), width_(blend_width) {
  if (!std::isfinite(rising_) || !std::isfinite(lowering_)) {
    throw Error(ErrorCode::InvalidArgument, "sit-stand scales must be finite");
  }
  if (!(width_ > 0.0 && width_ <= 0.5)) throw Error(ErrorCode::InvalidArgument, "blend width must lie in (0, 0.5]");
  if (std::abs(rising_ - lowering_) > kMaxScaleSeparation + 1e-12) {
    throw Error(ErrorCode::SeparationExceeded, "sit-to-stand and stand-to-sit scales differ by " +
                                                   std::to_string(std::abs(rising_ - lowering_)) + " > 0.60");
  }
}

double blended_scale(double s, Direction direction, const ScalingSchedule& schedule) {
  const double w = schedule.blend_width();
  const double rise = schedule.sit_to_stand_scale();
  const double lower = schedule.stand_to_sit_scale();
  s = std::clamp(s, 0.0, 1.0);
  if (direction == Direction::rising) {
    if (s <= 1.0 - w) return rise;
    if (s >= 1.0) return lower;
    return rise + (lower - rise) * (s - (1.0 - w)) / w;
  }
  if (s >= w) return lower;
  if (s <= 0.0) return rise;
  return lower + (rise - lower) * (w - s) / w;
}

ConstraintProfile default_sitstand_constraints() { return ConstraintProfile::flat(0.2, 0.2, 0.0, 0.15); }

SitStandFit fit_sitstand(const StrideSet& motions, const ConstraintProfile& constraints,
                         const SitStandOptions& options) {
  if (motions.strides.empty()) throw Error(ErrorCode::EmptyInput, "sit-stand fit needs at least one motion");
  if (!(options.relu_lo < options.relu_hi)) throw Error(ErrorCode::InvalidArgument, "relu_lo must be below relu_hi");
  const bool knee = motions.joint == Joint::knee;

  std::vector<fitting::Sample> samples;
  samples.reserve(motions.strides.size() * kPhasePoints);
  double f_lo = 1.0, f_hi = 0.0;
  for (const auto& motion : motions.strides) {
    for (std::size_t i = 0; i < kPhasePoints; ++i) {
      const double f = knee ? velocity_blend(motion.velocity[i], options.relu_lo, options.relu_hi) : 0.0;
      f_lo = std::min(f_lo, f);
      f_hi = std::max(f_hi, f);
      samples.push_back({phase_at(i), motion.angle[i], motion.velocity[i], motion.torque[i], f});
    }
  }

  fitting::Spec spec;
  spec.window_end = 1.0;
  spec.ridge = options.ridge;
  spec.qp = options.qp;
  spec.second_equilibrium = knee && f_hi > f_lo;
  std::vector<std::string> warnings;
  if (knee && !spec.second_equilibrium) {
    warnings.push_back("RegimeNotExcited: f(theta_dot) is constant over the data, e2 fixed at zero");
    spdlog::warn("sit-stand fit: only one velocity regime present, e2 fixed at zero");
    // A constant non-zero f is absorbed into e1.
    for (auto& smp : samples) smp.blend = 0.0;
  }

  const fitting::Result r = fitting::fit(samples, fitting::grid_bounds(constraints), spec);
  SitStandFit out;
  out.model.k = r.k;
  out.model.b = r.b;
  out.model.e1 = r.e1;
  out.model.e2 = spec.second_equilibrium ? r.e2 : Coeffs{};
  out.model.joint = motions.joint;
  out.model.relu_lo = options.relu_lo;
  out.model.relu_hi = options.relu_hi;

  out.fit.polynomials = {r.k, r.e1, r.b, motions.task, motions.joint};
  out.fit.vaf = r.vaf;
  out.fit.residual_rms = r.residual_rms;
  out.fit.constraint_violation_max = r.constraint_violation_max;
  out.fit.objective = r.objective;
  out.fit.kkt = r.kkt;
  out.fit.iterations = r.iterations;
  out.fit.ridge_applied = r.ridge_applied;
  out.fit.warnings = warnings;
  out.fit.warnings.insert(out.fit.warnings.end(), r.warnings.begin(), r.warnings.end());
  return out;
}

}  // namespace ptune
