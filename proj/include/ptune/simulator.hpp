#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptune/tuning.hpp"

namespace ptune {

/// Measured joint state on the phase grid.
struct JointState {
  PhaseSeries angle;
  PhaseSeries velocity;
};

using WalkInput = std::map<Joint, JointState>;

/// One stride per joint from a dataset (the stride index is shared across joints).
WalkInput stride_input(const Dataset& dataset, const SubjectId& subject, const Task& task, std::size_t stride = 0);

/// Population mean angle and velocity at a task.
WalkInput mean_input(const Dataset& dataset, const Task& task, const std::vector<Joint>& joints);

struct ReplayResult {
  Task task;
  double toe_off = kDefaultToeOff;
  std::size_t swing_begin = 0;  // first grid index with s > toe_off
  /// Commanded stance torque (N·m/kg); zero in swing.
  std::map<Joint, PhaseSeries> commanded_torque;
  /// Swing position reference (rad); zero in stance.
  std::map<Joint, PhaseSeries> kinematic_reference;
  /// |theta_d(first swing sample) - theta(last stance sample)| per joint.
  std::map<Joint, double> toe_off_jump;
  std::string bundle_hash;

  bool operator==(const ReplayResult&) const = default;
};

/// Bilinear interpolation of the fitted per-task coefficients. Tasks outside the grid are clamped
/// to its hull (logged). Throws MissingModel.
ImpedancePolynomials interpolate_impedance(const ModelBundle& bundle, Joint joint, const Task& task);

/// Stance: impedance torque from the interpolated polynomials. Swing: kinematic reference.
/// Throws MissingModel when a joint in `input` has no model in the bundle.
ReplayResult replay_walk(const ModelBundle& bundle, const WalkInput& input, const Task& task);

struct SitStandTrajectory {
  std::vector<double> thigh;     // rad
  std::vector<double> angle;     // knee, rad
  std::vector<double> velocity;  // knee, rad/s
};

struct SitStandReplay {
  Direction direction = Direction::rising;
  std::vector<double> phase;
  std::vector<double> torque;

  bool operator==(const SitStandReplay&) const = default;
};

/// torque = eval_sitstand_torque * (1 + blended_scale). Throws MissingModel, DegenerateCalibration,
/// LengthMismatch.
SitStandReplay replay_sitstand(const ModelBundle& bundle, const SitStandTrajectory& trajectory, Direction direction);

/// Thigh, knee angle and velocity of a recorded motion; thigh reconstructed from the motion phase
/// through the bundle calibration.
SitStandTrajectory trajectory_from_motion(const Stride& motion, const ThighCalibration& calibration);

struct JointComparison {
  Task task;
  Joint joint = Joint::ankle;
  double peak_torque_change_pct = 0.0;
  double rms_torque_change = 0.0;     // N·m/kg
  double phase_of_peak_shift = 0.0;   // stance torque peak
  double reference_peak_shift = 0.0;  // swing reference peak, wrapped to (-0.5, 0.5]
};

struct ComparisonReport {
  std::vector<JointComparison> walking;
  std::map<Direction, double> sitstand_peak_change_pct;
};

/// Pairs are matched by position; tasks and joints must agree. Results are averaged per
/// (task, joint). Throws UnmatchedPairs.
ComparisonReport compare(const std::vector<ReplayResult>& tuned, const std::vector<ReplayResult>& baseline,
                         const std::vector<SitStandReplay>& tuned_sitstand = {},
                         const std::vector<SitStandReplay>& baseline_sitstand = {});

/// Signed phase difference a - b wrapped to (-0.5, 0.5].
double circular_phase_difference(double a, double b);

/// Long format: task,joint,signal,phase,value.
std::string replay_csv(const std::vector<ReplayResult>& results);
nlohmann::json to_json(const ReplayResult& result);
std::string comparison_csv(const ComparisonReport& report);
nlohmann::json to_json(const ComparisonReport& report);

}  // namespace ptune
