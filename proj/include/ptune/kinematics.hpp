#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ptune/gait_data.hpp"

namespace ptune {

inline constexpr int kFourierDegree = 10;
inline constexpr std::size_t kFourierCoeffs = 2 * kFourierDegree + 1;

/// Coefficient order: a0, a1, b1, a2, b2, ..., a10, b10 (cosine/sine interleaved).
using FourierCoeffs = std::array<double, kFourierCoeffs>;

/// a0 + sum_j a_j cos(2 pi j s) + b_j sin(2 pi j s). Exactly periodic: f(0) == f(1) bitwise.
double eval_fourier(const FourierCoeffs& coeffs, double s);

/// Fourier regressors at phase s, in coefficient order.
FourierCoeffs fourier_row(double s);

/// sum_j c_j C(d, j) x^j (1 - x)^(d - j), d = coeffs.size() - 1.
/// x outside [0, 1] is clamped with a logged warning.
double eval_bernstein(std::span<const double> coeffs, double x);

/// Bernstein basis values B_{j,d}(x), j = 0..d, for x in [0, 1].
std::vector<double> bernstein_basis(int degree, double x);

/// Affine map of (speed, incline) onto [0, 1]^2 from the training grid extremes.
struct TaskNormalization {
  double speed_lo = 0.0, speed_hi = 1.0;
  double incline_lo = 0.0, incline_hi = 1.0;

  /// Unclamped normalized coordinates.
  std::array<double, 2> operator()(const Task& task) const;

  bool operator==(const TaskNormalization&) const = default;
};

struct KinematicModel {
  Joint joint = Joint::knee;
  int speed_degree = 2;
  int incline_degree = 2;
  TaskNormalization normalization;
  /// Phase bases b_k(s), k = 0..N-1.
  std::vector<FourierCoeffs> bases;
  /// Per basis, Bernstein tensor coefficients indexed [i * (incline_degree + 1) + j].
  std::vector<std::vector<double>> task_coeffs;
  std::map<Task, double> task_vaf;

  std::size_t basis_count() const noexcept { return bases.size(); }

  bool operator==(const KinematicModel&) const = default;
};

/// c_k(task) for every basis, with the task clamped into the training hull.
std::vector<double> task_weights(const KinematicModel& model, const Task& task);

/// theta_d(s, task) in rad. Throws PhaseOutOfRange.
double eval_model(const KinematicModel& model, double s, const Task& task);

PhaseSeries eval_model(const KinematicModel& model, const Task& task);

struct KinematicOptions {
  int speed_degree = 2;
  int incline_degree = 2;
  /// Bases retained until this fraction of singular-value energy is reached.
  double energy = 0.999;
  /// Overrides the energy rule when set.
  std::optional<std::size_t> basis_count;

  bool operator==(const KinematicOptions&) const = default;
};

/// Knee gets a cubic incline dependence; the other joints are quadratic on both axes.
KinematicOptions default_kinematic_options(Joint joint);

using TrainingOverrides = std::map<Task, PhaseSeries>;

/// Fits per-task population mean angle trajectories plus additive overrides.
/// Throws RankDeficientTaskGrid when the task grid cannot identify the Bernstein degrees.
KinematicModel fit_kinematic_model(const Dataset& dataset, Joint joint, const TrainingOverrides& overrides = {},
                                   const std::optional<KinematicOptions>& options = std::nullopt);

/// Same fit on explicit per-task targets.
KinematicModel fit_kinematic_model(const std::map<Task, PhaseSeries>& targets, Joint joint,
                                   const KinematicOptions& options);

}  // namespace ptune
