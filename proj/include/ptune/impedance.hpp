#pragma once

#include <algorithm>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ptune/gait_data.hpp"
#include "ptune/qp.hpp"

namespace ptune {

inline constexpr int kImpedanceDegree = 4;
/// Degree of the product w = K * theta_eq used by the convex fit.
inline constexpr int kProductDegree = 2 * kImpedanceDegree;

using Coeffs = std::array<double, kImpedanceDegree + 1>;

/// Phase polynomials sum_i c_i s^i for stiffness, equilibrium and damping at one task.
struct ImpedancePolynomials {
  Coeffs k{};  // N·m/(rad·kg)
  Coeffs e{};  // rad
  Coeffs b{};  // N·m·s/(rad·kg)
  Task task;
  Joint joint = Joint::ankle;

  bool operator==(const ImpedancePolynomials&) const = default;
};

struct ImpedanceValues {
  double stiffness = 0.0;
  double equilibrium = 0.0;
  double damping = 0.0;
};

ImpedanceValues eval_impedance(const ImpedancePolynomials& poly, double s);

/// tau = -K (theta - theta_eq) - B theta_dot
constexpr double impedance_torque(double stiffness, double equilibrium, double damping, double angle,
                                  double velocity) noexcept {
  return -stiffness * (angle - equilibrium) - damping * velocity;
}

/// Phase-sampled bounds on K and B. heel_strike_k_min replaces k_min at s = 0.
struct ConstraintProfile {
  PhaseSeries::Values k_min{};
  PhaseSeries::Values b_min{};
  PhaseSeries::Values b_max{};
  double heel_strike_k_min = 0.0;

  static ConstraintProfile flat(double k_min, double heel_strike_k_min, double b_min, double b_max);

  /// Throws InfeasibleConstraints (b_min > b_max) or InvalidArgument (k_min <= 0, heel below k_min[0]).
  void validate() const;

  double k_lower(std::size_t i) const { return i == 0 ? std::max(k_min[0], heel_strike_k_min) : k_min[i]; }

  bool operator==(const ConstraintProfile&) const = default;
};

/// Placeholder defaults shipped in config/default.json: 0.2 flat, heel strike 1.0, B in [0, 0.15].
ConstraintProfile default_constraint_profile();

inline constexpr double kDefaultToeOff = 0.6;

struct FitOptions {
  double stance_end = kDefaultToeOff;
  double ridge = 1e-6;
  /// Equilibrated-Hessian eigenvalue ratio below which the fit is treated as singular.
  double singular_ratio = 1e-13;
  qp::Options qp;

  bool operator==(const FitOptions&) const = default;
};

struct FitResult {
  ImpedancePolynomials polynomials;
  double vaf = 0.0;
  double residual_rms = 0.0;
  double constraint_violation_max = 0.0;
  double objective = 0.0;  // mean squared torque residual of the convex problem
  qp::KktReport kkt;
  int iterations = 0;
  bool ridge_applied = false;
  std::vector<std::string> warnings;
};

/// 1 - var(reference - predicted) / var(reference)
double vaf(std::span<const double> reference, std::span<const double> predicted);
double vaf(const PhaseSeries& reference, const PhaseSeries& predicted);

namespace fitting {

/// One training sample; `blend` is f(theta_dot) for the two-equilibrium model.
struct Sample {
  double phase = 0.0;
  double angle = 0.0;
  double velocity = 0.0;
  double torque = 0.0;
  double blend = 0.0;
};

struct PhaseBound {
  double phase = 0.0;
  double k_min = 0.0;
  double b_min = 0.0;
  double b_max = 0.0;
};

struct Spec {
  bool second_equilibrium = false;  // fit e2 scaled by the sample blend
  double window_end = kDefaultToeOff;
  double ridge = 1e-6;
  double singular_ratio = 1e-13;
  /// Damped Gauss-Newton refinement of the degree-4 model after the convex relaxation.
  int refine_rounds = 100;
  double refine_tolerance = 1e-15;
  qp::Options qp;
};

struct Result {
  Coeffs k{}, e1{}, e2{}, b{};
  double vaf = 0.0;
  double residual_rms = 0.0;
  double constraint_violation_max = 0.0;
  double objective = 0.0;             // mean squared residual of the returned model
  double relaxation_objective = 0.0;  // optimum of the convex relaxation (a lower bound)
  qp::KktReport kkt;                  // final (K, B) solve with theta_eq fixed
  int iterations = 0;
  int refine_rounds = 0;
  bool ridge_applied = false;
  std::vector<std::string> warnings;
};

/// Convex problem over (K, w1[, w2], B) in Legendre coordinates; exposed for oracle checks.
qp::Problem build_problem(std::span<const Sample> samples, std::span<const PhaseBound> bounds, const Spec& spec,
                          bool* ridge_applied = nullptr);

/// Constraint rows only (independent of samples), used to cache a feasible point.
void build_constraints(std::span<const PhaseBound> bounds, const Spec& spec, Eigen::MatrixXd& A, Eigen::VectorXd& b);

/// Feasible point for the constraint rows, started from a band-centred guess.
Eigen::VectorXd feasible_point(std::span<const PhaseBound> bounds, const Spec& spec);

Result fit(std::span<const Sample> samples, std::span<const PhaseBound> bounds, const Spec& spec,
           const std::optional<Eigen::VectorXd>& feasible_start = std::nullopt);

std::vector<PhaseBound> grid_bounds(const ConstraintProfile& constraints);

}  // namespace fitting

/// Fits many stride sets against one validated constraint profile.
class ImpedanceFitter {
 public:
  explicit ImpedanceFitter(ConstraintProfile constraints, FitOptions options = {});

  FitResult fit(const StrideSet& strides) const;
  const ConstraintProfile& constraints() const noexcept { return constraints_; }
  const FitOptions& options() const noexcept { return options_; }

 private:
  ConstraintProfile constraints_;
  FitOptions options_;
  std::vector<fitting::PhaseBound> bounds_;
};

FitResult fit_impedance(const StrideSet& strides, const ConstraintProfile& constraints,
                        double stance_end = kDefaultToeOff);

/// Torque predicted by the polynomials along one stride (full cycle).
PhaseSeries predicted_torque(const ImpedancePolynomials& poly, const Stride& stride);

}  // namespace ptune
