#pragma once

#include <string>
#include <vector>

#include "ptune/impedance.hpp"

namespace ptune {

enum class Direction { rising, lowering };

std::string_view to_string(Direction direction);
Direction direction_from_string(std::string_view name);

/// Knee extension during rising gives negative knee velocity.
Direction direction_of(const Stride& motion);

struct ThighCalibration {
  double theta_sit = 1.4;    // rad from vertical
  double theta_stand = 0.1;  // rad from vertical

  bool operator==(const ThighCalibration&) const = default;
};

/// s = 0 at theta_sit, s = 1 at theta_stand, clamped. Throws DegenerateCalibration.
double phase_from_thigh(double thigh_angle, double theta_sit, double theta_stand);
double phase_from_thigh(double thigh_angle, const ThighCalibration& calibration);

inline constexpr double kDefaultReluLo = 0.0;
inline constexpr double kDefaultReluHi = 0.35;

/// Saturating ramp: 0 below lo, 1 above hi, linear between.
double velocity_blend(double velocity, double relu_lo = kDefaultReluLo, double relu_hi = kDefaultReluHi);

struct SitStandModel {
  Coeffs k{}, b{}, e1{}, e2{};
  Joint joint = Joint::knee;
  double relu_lo = kDefaultReluLo;
  double relu_hi = kDefaultReluHi;

  bool operator==(const SitStandModel&) const = default;
};

/// tau = -K(s) (theta - e1(s) - f(theta_dot) e2(s)) - B(s) theta_dot. Throws PhaseOutOfRange.
double eval_sitstand_torque(const SitStandModel& model, double s, double angle, double velocity);

inline constexpr double kMaxScaleSeparation = 0.60;
inline constexpr double kDefaultBlendWidth = 0.10;

/// Direction-dependent torque scale (fractions: 0.2 means +20 %).
class ScalingSchedule {
 public:
  ScalingSchedule() = default;
  /// Throws SeparationExceeded when |sit_to_stand - stand_to_sit| > 0.60.
  ScalingSchedule(double sit_to_stand_scale, double stand_to_sit_scale, double blend_width = kDefaultBlendWidth);

  double sit_to_stand_scale() const noexcept { return rising_; }
  double stand_to_sit_scale() const noexcept { return lowering_; }
  double blend_width() const noexcept { return width_; }

  bool operator==(const ScalingSchedule&) const = default;

 private:
  double rising_ = 0.0;
  double lowering_ = 0.0;
  double width_ = kDefaultBlendWidth;
};

/// Rising ramps to the lowering scale over s in [1 - w, 1]; lowering ramps to the rising
/// scale over s in [0, w], so the two agree at both ends of the motion.
double blended_scale(double s, Direction direction, const ScalingSchedule& schedule);

struct SitStandOptions {
  double relu_lo = kDefaultReluLo;
  double relu_hi = kDefaultReluHi;
  double ridge = 1e-6;
  qp::Options qp;

  bool operator==(const SitStandOptions&) const = default;
};

/// Flat bounds without a separate s = 0 stiffness floor.
ConstraintProfile default_sitstand_constraints();

struct SitStandFit {
  SitStandModel model;
  FitResult fit;  // polynomials.e holds e1
};

/// Fits every sample of every motion. Only the knee gets a second equilibrium; when f(theta_dot)
/// never varies, e2 is left at zero and a RegimeNotExcited warning is recorded.
SitStandFit fit_sitstand(const StrideSet& motions, const ConstraintProfile& constraints,
                         const SitStandOptions& options = {});

}  // namespace ptune
