#include "ptune/tuning.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <numbers>
#include <spdlog/spdlog.h>

#include "ptune/error.hpp"
#include "ptune/ikc.hpp"

namespace ptune {

namespace {

std::string format_bound_error(Parameter p, double value) {
  const auto b = parameter_bounds(p);
  return std::string(to_string(p)) + " = " + std::to_string(value) + " outside [" + std::to_string(b.lo) + ", " +
         std::to_string(b.hi) + "]";
}

void check_range(Parameter p, double value) {
  const auto b = parameter_bounds(p);
  if (!std::isfinite(value) || value < b.lo || value > b.hi) throw Error(ErrorCode::OutOfBounds, format_bound_error(p, value));
}

double mean_of(const std::map<Task, double>& values) {
  if (values.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [_, v] : values) sum += v;
  return sum / static_cast<double>(values.size());
}

void require_floor(const BundleConfig& config, Joint joint, const std::string& id, const std::string& where,
                   double vaf) {
  const double floor = config.floor_for(joint);
  if (!(vaf >= floor)) {
    throw Error(ErrorCode::RegenerationRejected,
                id + " " + where + ": VAF " + std::to_string(vaf) + " below floor " + std::to_string(floor));
  }
}

bool has_joint(const BundleConfig& config, Joint joint) {
  return std::find(config.joints.begin(), config.joints.end(), joint) != config.joints.end();
}

}  // namespace

std::string_view to_string(Parameter parameter) {
  switch (parameter) {
    case Parameter::stance_flexion_resistance: return "stance_flexion_resistance_pct";
    case Parameter::swing_knee_flexion: return "swing_knee_flexion_deg";
    case Parameter::pushoff: return "pushoff_pct";
    case Parameter::sit_to_stand: return "sit_to_stand_pct";
    case Parameter::stand_to_sit: return "stand_to_sit_pct";
  }
  return "?";
}

Parameter parameter_from_string(std::string_view name) {
  for (Parameter p : kParameters) {
    if (name == to_string(p)) return p;
  }
  if (name == "stance" || name == "stance_flexion_resistance") return Parameter::stance_flexion_resistance;
  if (name == "flexion" || name == "swing_knee_flexion") return Parameter::swing_knee_flexion;
  if (name == "pushoff" || name == "push_off") return Parameter::pushoff;
  if (name == "sit_to_stand") return Parameter::sit_to_stand;
  if (name == "stand_to_sit") return Parameter::stand_to_sit;
  throw Error(ErrorCode::NotFound, "unknown tuning parameter '" + std::string(name) + "'");
}

Bounds parameter_bounds(Parameter parameter) {
  switch (parameter) {
    case Parameter::swing_knee_flexion: return {-10.0, 30.0};
    case Parameter::stance_flexion_resistance:
    case Parameter::pushoff:
    case Parameter::sit_to_stand:
    case Parameter::stand_to_sit: return {-50.0, 60.0};
  }
  return {};
}

double TuningParams::get(Parameter parameter) const {
  switch (parameter) {
    case Parameter::stance_flexion_resistance: return stance_flexion_resistance_pct;
    case Parameter::swing_knee_flexion: return swing_knee_flexion_deg;
    case Parameter::pushoff: return pushoff_pct;
    case Parameter::sit_to_stand: return sit_to_stand_pct;
    case Parameter::stand_to_sit: return stand_to_sit_pct;
  }
  return 0.0;
}

void TuningParams::set(Parameter parameter, double value) {
  switch (parameter) {
    case Parameter::stance_flexion_resistance: stance_flexion_resistance_pct = value; break;
    case Parameter::swing_knee_flexion: swing_knee_flexion_deg = value; break;
    case Parameter::pushoff: pushoff_pct = value; break;
    case Parameter::sit_to_stand: sit_to_stand_pct = value; break;
    case Parameter::stand_to_sit: stand_to_sit_pct = value; break;
  }
}

bool TuningParams::is_zero() const { return *this == TuningParams{}; }

void validate(const TuningParams& params) {
  for (Parameter p : kParameters) check_range(p, params.get(p));
  const double separation = std::abs(params.sit_to_stand_pct - params.stand_to_sit_pct);
  if (separation > kMaxSitStandSeparationPct + 1e-9) {
    throw Error(ErrorCode::OutOfBounds,
                "sit-to-stand and stand-to-sit differ by " + std::to_string(separation) + " > 60");
  }
}

TuningProfile::TuningProfile(const TuningParams& params, std::string name_, int version_, std::string created_at_)
    : name(std::move(name_)), version(version_), created_at(std::move(created_at_)), params_(params) {
  validate(params_);
}

TuningProfile TuningProfile::with(Parameter parameter, double value) const {
  TuningParams next = params_;
  next.set(parameter, value);
  TuningProfile out(next, name, version, created_at);
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

PresetLevel preset_level_from_string(std::string_view name) {
  std::string lower(name);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "high") return PresetLevel::high;
  if (lower == "low") return PresetLevel::low;
  throw Error(ErrorCode::NotFound, "unknown preset level '" + std::string(name) + "'");
}

double preset_value(double lo, double hi, PresetLevel level) { return 0.8 * (level == PresetLevel::high ? hi : lo); }

TuningProfile preset_profile(Parameter parameter, PresetLevel level) {
  const auto b = parameter_bounds(parameter);
  TuningParams params;
  params.set(parameter, preset_value(b.lo, b.hi, level));
  return TuningProfile(params, std::string(to_string(parameter)) + (level == PresetLevel::high ? " HIGH" : " LOW"));
}

double raised_cosine(double s, double peak, double half_width) {
  const double d = s - peak;
  if (std::abs(d) >= half_width) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi * d / half_width));
}

TuningSpline build_flexion_spline(double deg, double peak_phase, double half_width) {
  check_range(Parameter::swing_knee_flexion, deg);
  if (!(peak_phase >= 0.0 && peak_phase <= 1.0)) throw Error(ErrorCode::OutOfBounds, "flexion peak phase outside [0, 1]");
  TuningSpline spline;
  spline.kind = SplineKind::additive;
  spline.s_lo = peak_phase - half_width;
  spline.s_peak = peak_phase;
  spline.s_hi = peak_phase + half_width;
  const double amplitude = deg * kDegToRad;
  for (std::size_t i = 0; i < kPhasePoints; ++i) spline.values[i] = amplitude * raised_cosine(phase_at(i), peak_phase, half_width);
  return spline;
}

TuningSpline build_pushoff_spline(double pct, double peak_phase, double half_width) {
  check_range(Parameter::pushoff, pct);
  if (!(peak_phase >= 0.0 && peak_phase <= 1.0)) throw Error(ErrorCode::OutOfBounds, "push-off peak phase outside [0, 1]");
  TuningSpline spline;
  spline.kind = SplineKind::multiplicative;
  spline.s_lo = peak_phase - half_width;
  spline.s_peak = peak_phase;
  spline.s_hi = peak_phase + half_width;
  const double gain = pct / 100.0;
  for (std::size_t i = 0; i < kPhasePoints; ++i) {
    spline.values[i] = 1.0 + gain * raised_cosine(phase_at(i), peak_phase, half_width);
  }
  return spline;
}

std::map<Task, PhaseSeries> propagate_pushoff(const std::map<Task, PhaseSeries>& reference_torques,
                                              const TuningSpline& spline, const Task& baseline_task) {
  const auto base = reference_torques.find(baseline_task);
  if (base == reference_torques.end()) {
    throw Error(ErrorCode::MissingBaselineTask, "no reference torque at baseline task " + baseline_task.label());
  }
  PhaseSeries::Values psi{};
  for (std::size_t i = 0; i < kPhasePoints; ++i) psi[i] = base->second[i] * spline.values[i] - base->second[i];

  std::map<Task, PhaseSeries> out;
  for (const auto& [task, torque] : reference_torques) {
    PhaseSeries::Values v = torque.values();
    for (std::size_t i = 0; i < kPhasePoints; ++i) {
      if (psi[i] != 0.0) v[i] += psi[i];
    }
    out.emplace(task, PhaseSeries(torque.kind(), v));
  }
  return out;
}

ConstraintProfile apply_stance_resistance(const ConstraintProfile& constraints, double pct,
                                          std::vector<std::string>* warnings) {
  check_range(Parameter::stance_flexion_resistance, pct);
  ConstraintProfile out = constraints;
  out.heel_strike_k_min = constraints.heel_strike_k_min * (1.0 + pct / 100.0);
  if (out.heel_strike_k_min < out.k_min[0]) {
    const std::string msg = "heel-strike stiffness bound " + std::to_string(out.heel_strike_k_min) +
                            " clipped to k_min " + std::to_string(out.k_min[0]);
    spdlog::warn("{}", msg);
    if (warnings) warnings->push_back(msg);
    out.heel_strike_k_min = out.k_min[0];
  }
  return out;
}

const ConstraintProfile& BundleConfig::constraints_for(Joint joint) const {
  static const ConstraintProfile fallback = default_constraint_profile();
  const auto it = constraints.find(joint);
  return it == constraints.end() ? fallback : it->second;
}

KinematicOptions BundleConfig::kinematics_for(Joint joint) const {
  const auto it = kinematics.find(joint);
  return it == kinematics.end() ? default_kinematic_options(joint) : it->second;
}

double BundleConfig::floor_for(Joint joint) const {
  const auto it = vaf_floor.find(joint);
  return it == vaf_floor.end() ? 0.0 : it->second;
}

BundleConfig default_bundle_config() {
  BundleConfig c;
  for (Joint j : {Joint::ankle, Joint::knee, Joint::hip}) {
    c.constraints[j] = default_constraint_profile();
    c.kinematics[j] = default_kinematic_options(j);
  }
  return c;
}

std::string impedance_model_id(Joint joint) { return "impedance." + std::string(to_string(joint)); }
std::string kinematics_model_id(Joint joint) { return "kinematics." + std::string(to_string(joint)); }

std::map<Joint, double> ModelBundle::vaf_per_joint() const {
  std::map<Joint, double> out;
  for (const auto& [joint, per_task] : impedance_vaf) out[joint] = mean_of(per_task);
  return out;
}

void ModelBundle::stage(const TuningProfile& next) {
  for (auto& id : affected_models(profile.params(), next.params(), config)) dirty.insert(id);
  profile = next;
}

std::map<Task, Stride> reference_trajectories(const Dataset& dataset, Joint joint, const BundleConfig& config) {
  const auto tasks = dataset.walking_tasks();
  if (std::find(tasks.begin(), tasks.end(), config.baseline_task) == tasks.end()) {
    throw Error(ErrorCode::MissingBaselineTask, "dataset has no baseline task " + config.baseline_task.label());
  }
  std::map<SignalKind, IKC> contribution;
  if (config.individual) {
    if (!dataset.find(*config.individual, config.baseline_task, joint)) {
      throw Error(ErrorCode::MissingBaselineTask,
                  "subject " + *config.individual + " has no data at the baseline task " + config.baseline_task.label());
    }
    for (SignalKind kind : {SignalKind::angle, SignalKind::velocity, SignalKind::torque}) {
      contribution[kind] =
          compute_ikc(subject_mean(dataset, *config.individual, config.baseline_task, joint, kind),
                      loo_mean(dataset, *config.individual, config.baseline_task, joint, kind));
    }
  }

  std::map<Task, Stride> out;
  for (const Task& task : tasks) {
    if (dataset.subjects_with(task, joint).empty()) continue;
    auto reference = [&](SignalKind kind) {
      if (!config.individual) return population_mean(dataset, task, joint, kind);
      return individualize(loo_mean(dataset, *config.individual, task, joint, kind), contribution.at(kind));
    };
    Stride s;
    s.angle = reference(SignalKind::angle);
    s.velocity = reference(SignalKind::velocity);
    s.torque = reference(SignalKind::torque);
    s.id = "reference";
    out.emplace(task, std::move(s));
  }
  return out;
}

double pushoff_peak_phase(const Dataset& dataset, const BundleConfig& config) {
  const auto refs = reference_trajectories(dataset, Joint::ankle, config);
  const auto& torque = refs.at(config.baseline_task).torque;
  std::size_t best = 0;
  for (std::size_t i = 0; i < kPhasePoints && phase_at(i) <= config.fit.stance_end + 1e-12; ++i) {
    if (std::abs(torque[i]) > std::abs(torque[best])) best = i;
  }
  return phase_at(best);
}

double flexion_peak_phase(const Dataset& dataset, const BundleConfig& config) {
  const auto refs = reference_trajectories(dataset, Joint::knee, config);
  const auto& angle = refs.at(config.baseline_task).angle;
  std::size_t best = kPhasePoints - 1;
  for (std::size_t i = 0; i < kPhasePoints; ++i) {
    if (phase_at(i) < config.fit.stance_end) continue;
    if (best == kPhasePoints - 1 || angle[i] > angle[best]) best = i;
  }
  return phase_at(best);
}

std::set<std::string> affected_models(const TuningParams& before, const TuningParams& after,
                                      const BundleConfig& config) {
  std::set<std::string> out;
  if (has_joint(config, Joint::knee) && before.stance_flexion_resistance_pct != after.stance_flexion_resistance_pct) {
    out.insert(impedance_model_id(Joint::knee));
  }
  if (has_joint(config, Joint::knee) && before.swing_knee_flexion_deg != after.swing_knee_flexion_deg) {
    out.insert(kinematics_model_id(Joint::knee));
  }
  if (has_joint(config, Joint::ankle) && before.pushoff_pct != after.pushoff_pct) {
    out.insert(impedance_model_id(Joint::ankle));
  }
  if (before.sit_to_stand_pct != after.sit_to_stand_pct || before.stand_to_sit_pct != after.stand_to_sit_pct) {
    out.insert(std::string(kSitStandModelId));
  }
  return out;
}

std::map<Task, Stride> impedance_targets(const Dataset& dataset, Joint joint, const TuningParams& params,
                                        const BundleConfig& config) {
  auto refs = reference_trajectories(dataset, joint, config);
  if (joint == Joint::ankle) {
    std::map<Task, PhaseSeries> torques;
    for (const auto& [task, stride] : refs) torques.emplace(task, stride.torque);
    const auto spline = build_pushoff_spline(params.pushoff_pct, pushoff_peak_phase(dataset, config),
                                             config.spline_half_width);
    const auto tuned = propagate_pushoff(torques, spline, config.baseline_task);
    for (auto& [task, stride] : refs) stride.torque = tuned.at(task);
  }
  return refs;
}

namespace {

void fit_walking_impedance(ModelBundle& bundle, Joint joint, const TuningParams& params, const Dataset& dataset) {
  const BundleConfig& config = bundle.config;
  const std::string id = impedance_model_id(joint);
  ConstraintProfile constraints = config.constraints_for(joint);
  if (joint == Joint::knee) constraints = apply_stance_resistance(constraints, params.stance_flexion_resistance_pct);

  const auto refs = impedance_targets(dataset, joint, params, config);
  const ImpedanceFitter fitter(constraints, config.fit);
  std::map<Task, ImpedancePolynomials> polys;
  std::map<Task, double> vafs;
  for (const auto& [task, stride] : refs) {
    const StrideSet set{"reference", task, joint, {stride}};
    const FitResult r = fitter.fit(set);
    require_floor(config, joint, id, task.label(), r.vaf);
    polys.emplace(task, r.polynomials);
    vafs.emplace(task, r.vaf);
  }
  bundle.walking_impedance[joint] = std::move(polys);
  bundle.model_vaf[id] = mean_of(vafs);
  bundle.impedance_vaf[joint] = std::move(vafs);
}

void fit_walking_kinematics(ModelBundle& bundle, Joint joint, const TuningParams& params, const Dataset& dataset) {
  const BundleConfig& config = bundle.config;
  const std::string id = kinematics_model_id(joint);
  TrainingOverrides overrides;
  if (joint == Joint::knee) {
    const auto spline = build_flexion_spline(params.swing_knee_flexion_deg, flexion_peak_phase(dataset, config),
                                             config.spline_half_width);
    const PhaseSeries offset(SignalKind::angle, spline.values);
    for (const Task& task : dataset.walking_tasks()) {
      if (!dataset.subjects_with(task, joint).empty()) overrides.emplace(task, offset);
    }
  }
  KinematicModel model = fit_kinematic_model(dataset, joint, overrides, config.kinematics_for(joint));
  std::map<Task, double> vafs = model.task_vaf;
  for (const auto& [task, v] : vafs) require_floor(config, joint, id, task.label(), v);
  bundle.model_vaf[id] = mean_of(vafs);
  bundle.walking_kinematics[joint] = std::move(model);
}

void fit_sitstand_model(ModelBundle& bundle, const TuningParams& params, const Dataset& dataset) {
  const BundleConfig& config = bundle.config;
  const std::string id(kSitStandModelId);
  bundle.schedule = ScalingSchedule(params.sit_to_stand_pct / 100.0, params.stand_to_sit_pct / 100.0);
  if (dataset.subjects_with(kSitStandTask, Joint::knee).empty()) {
    bundle.sitstand.reset();
    bundle.sitstand_vaf = 0.0;
    bundle.model_vaf.erase(id);
    return;
  }
  const StrideSet* own = config.individual ? dataset.find(*config.individual, kSitStandTask, Joint::knee) : nullptr;
  const StrideSet motions = own ? *own : dataset.pooled(kSitStandTask, Joint::knee);
  const SitStandFit fit = fit_sitstand(motions, config.sitstand_constraints, config.sitstand);
  require_floor(config, Joint::knee, id, "fit", fit.fit.vaf);
  bundle.sitstand = fit.model;
  bundle.sitstand_vaf = fit.fit.vaf;
  bundle.model_vaf[id] = fit.fit.vaf;
}

void refit(ModelBundle& bundle, const std::string& id, const TuningParams& params, const Dataset& dataset) {
  if (id == kSitStandModelId) return fit_sitstand_model(bundle, params, dataset);
  for (Joint joint : bundle.config.joints) {
    if (id == impedance_model_id(joint)) return fit_walking_impedance(bundle, joint, params, dataset);
    if (id == kinematics_model_id(joint)) return fit_walking_kinematics(bundle, joint, params, dataset);
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model id '" + id + "'");
}

std::vector<std::string> all_model_ids(const BundleConfig& config) {
  std::vector<std::string> ids;
  for (Joint joint : config.joints) {
    ids.push_back(impedance_model_id(joint));
    ids.push_back(kinematics_model_id(joint));
  }
  ids.emplace_back(kSitStandModelId);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

ModelBundle build_baseline_bundle(const Dataset& dataset, const BundleConfig& config) {
  ModelBundle bundle;
  bundle.config = config;
  bundle.profile = TuningProfile(TuningParams{}, "baseline", 0, utc_timestamp());
  for (const auto& id : all_model_ids(config)) refit(bundle, id, bundle.profile.params(), dataset);
  return bundle;
}

Regeneration regenerate(const ModelBundle& bundle, const TuningProfile& next, const Dataset& dataset) {
  const auto start = std::chrono::steady_clock::now();
  validate(next.params());
  std::set<std::string> ids = affected_models(bundle.profile.params(), next.params(), bundle.config);
  ids.insert(bundle.dirty.begin(), bundle.dirty.end());

  Regeneration out;
  out.bundle = bundle;
  for (const auto& id : ids) refit(out.bundle, id, next.params(), dataset);
  out.bundle.dirty.clear();
  const int version = bundle.profile.version + (ids.empty() ? 0 : 1);
  out.bundle.profile = next;
  out.bundle.profile.version = version;
  out.regenerated.assign(ids.begin(), ids.end());
  out.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace ptune
