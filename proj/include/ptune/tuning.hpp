#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ptune/gait_data.hpp"
#include "ptune/impedance.hpp"
#include "ptune/kinematics.hpp"
#include "ptune/sitstand.hpp"

namespace ptune {

enum class Parameter { stance_flexion_resistance, swing_knee_flexion, pushoff, sit_to_stand, stand_to_sit };

inline constexpr std::array<Parameter, 5> kParameters{Parameter::stance_flexion_resistance,
                                                      Parameter::swing_knee_flexion, Parameter::pushoff,
                                                      Parameter::sit_to_stand, Parameter::stand_to_sit};

/// JSON field name, e.g. "pushoff_pct".
std::string_view to_string(Parameter parameter);
/// Accepts the JSON field name or its short form ("stance", "flexion", "pushoff", ...). Throws NotFound.
Parameter parameter_from_string(std::string_view name);

struct Bounds {
  double lo = 0.0;
  double hi = 0.0;
};
Bounds parameter_bounds(Parameter parameter);

inline constexpr double kMaxSitStandSeparationPct = 60.0;

struct TuningParams {
  double stance_flexion_resistance_pct = 0.0;
  double swing_knee_flexion_deg = 0.0;
  double pushoff_pct = 0.0;
  double sit_to_stand_pct = 0.0;
  double stand_to_sit_pct = 0.0;

  double get(Parameter parameter) const;
  void set(Parameter parameter, double value);
  bool is_zero() const;

  bool operator==(const TuningParams&) const = default;
};

/// Throws OutOfBounds naming the first offending parameter.
void validate(const TuningParams& params);

/// Parameters are validated on every construction path; metadata is free-form.
class TuningProfile {
 public:
  TuningProfile() = default;
  explicit TuningProfile(const TuningParams& params, std::string name = "untitled", int version = 0,
                         std::string created_at = {});

  const TuningParams& params() const noexcept { return params_; }
  double get(Parameter parameter) const { return params_.get(parameter); }
  /// Copy with one parameter replaced (validated).
  TuningProfile with(Parameter parameter, double value) const;

  std::string name = "baseline";
  int version = 0;
  std::string created_at;

  bool operator==(const TuningProfile&) const = default;

 private:
  TuningParams params_;
};

/// Current UTC time as ISO-8601 with a Z suffix.
std::string utc_timestamp();

enum class PresetLevel { high, low };
PresetLevel preset_level_from_string(std::string_view name);

/// 80 % of the bound on the chosen side.
double preset_value(double lo, double hi, PresetLevel level);
TuningProfile preset_profile(Parameter parameter, PresetLevel level);

enum class SplineKind { additive, multiplicative };

struct TuningSpline {
  SplineKind kind = SplineKind::additive;
  PhaseSeries::Values values{};
  double s_lo = 0.0, s_peak = 0.0, s_hi = 0.0;
};

inline constexpr double kSplineHalfWidth = 0.12;

/// 0.5 (1 + cos(pi (s - peak) / half_width)) inside the window, 0 outside.
double raised_cosine(double s, double peak, double half_width = kSplineHalfWidth);

/// Additive knee-angle offset in rad peaking at `deg` degrees. Throws OutOfBounds.
TuningSpline build_flexion_spline(double deg, double peak_phase, double half_width = kSplineHalfWidth);

/// Multiplicative torque gain peaking at 1 + pct/100. Throws OutOfBounds.
TuningSpline build_pushoff_spline(double pct, double peak_phase, double half_width = kSplineHalfWidth);

/// tau_task + (tau_base * gamma - tau_base) for every task. Throws MissingBaselineTask.
std::map<Task, PhaseSeries> propagate_pushoff(const std::map<Task, PhaseSeries>& reference_torques,
                                              const TuningSpline& spline, const Task& baseline_task);

/// heel_strike_k_min scaled by 1 + pct/100, clipped (with a warning) at k_min[0]. Throws OutOfBounds.
ConstraintProfile apply_stance_resistance(const ConstraintProfile& constraints, double pct,
                                          std::vector<std::string>* warnings = nullptr);

/// Everything regeneration needs besides the profile and the dataset.
struct BundleConfig {
  Task baseline_task{1.0, 0.0};
  std::vector<Joint> joints{Joint::ankle, Joint::knee};
  std::map<Joint, ConstraintProfile> constraints;
  ConstraintProfile sitstand_constraints = default_sitstand_constraints();
  FitOptions fit;
  SitStandOptions sitstand;
  ThighCalibration calibration;
  std::map<Joint, KinematicOptions> kinematics;
  double spline_half_width = kSplineHalfWidth;
  std::map<Joint, double> vaf_floor{{Joint::ankle, 0.95}, {Joint::knee, 0.85}, {Joint::hip, 0.85}};
  /// Subject whose baseline-task contribution is propagated to every task; population mean when unset.
  std::optional<SubjectId> individual;

  const ConstraintProfile& constraints_for(Joint joint) const;
  KinematicOptions kinematics_for(Joint joint) const;
  double floor_for(Joint joint) const;

  bool operator==(const BundleConfig&) const = default;
};

BundleConfig default_bundle_config();

/// Model identifiers used for dirty flags and regeneration reports.
std::string impedance_model_id(Joint joint);
std::string kinematics_model_id(Joint joint);
inline constexpr std::string_view kSitStandModelId = "sitstand";

struct ModelBundle {
  BundleConfig config;
  std::map<Joint, std::map<Task, ImpedancePolynomials>> walking_impedance;
  std::map<Joint, std::map<Task, double>> impedance_vaf;
  std::map<Joint, KinematicModel> walking_kinematics;
  std::optional<SitStandModel> sitstand;
  double sitstand_vaf = 0.0;
  ScalingSchedule schedule;
  /// Per model id: mean VAF over its fits.
  std::map<std::string, double> model_vaf;
  TuningProfile profile;
  std::set<std::string> dirty;

  /// Stance impedance gauge per joint (mean task VAF).
  std::map<Joint, double> vaf_per_joint() const;

  /// SHA-256 over all coefficients, configuration constraints and the five parameters.
  std::string hash() const;

  /// Installs a profile without refitting; affected models become dirty.
  void stage(const TuningProfile& next);
};

/// Per-task reference trajectories used as fit targets (population mean, optionally individualized).
std::map<Task, Stride> reference_trajectories(const Dataset& dataset, Joint joint, const BundleConfig& config);

/// Peak |torque| phase in stance of the ankle reference at the baseline task.
double pushoff_peak_phase(const Dataset& dataset, const BundleConfig& config);
/// Peak knee flexion phase in swing at the baseline task.
double flexion_peak_phase(const Dataset& dataset, const BundleConfig& config);

/// Stance fit targets for one joint under a parameter set: the reference trajectories with the
/// push-off spline applied to the ankle torques.
std::map<Task, Stride> impedance_targets(const Dataset& dataset, Joint joint, const TuningParams& params,
                                        const BundleConfig& config);

/// Models whose inputs differ between two parameter sets.
std::set<std::string> affected_models(const TuningParams& before, const TuningParams& after,
                                      const BundleConfig& config);

ModelBundle build_baseline_bundle(const Dataset& dataset, const BundleConfig& config = default_bundle_config());

struct Regeneration {
  ModelBundle bundle;
  std::vector<std::string> regenerated;  // model ids, sorted
  double wall_time_s = 0.0;
};

/// Refits only the models affected by the profile change. Throws RegenerationRejected when a
/// refit VAF falls below the joint's floor; the input bundle is never modified.
Regeneration regenerate(const ModelBundle& bundle, const TuningProfile& next, const Dataset& dataset);

}  // namespace ptune
