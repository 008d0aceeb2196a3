#pragma once

#include <json.hpp>
#include <string>
#include <string_view>

#include "ptune/tuning.hpp"

namespace ptune::io {

using json = nlohmann::json;

json to_json(const Task& task);
Task task_from_json(const json& j);

json to_json(const ImpedancePolynomials& poly);
ImpedancePolynomials impedance_from_json(const json& j);

json to_json(const ConstraintProfile& constraints);
/// Each of k_min, b_min, b_max is either one number (flat) or 150 numbers.
ConstraintProfile constraints_from_json(const json& j);

json to_json(const KinematicModel& model);
KinematicModel kinematics_from_json(const json& j);

json to_json(const SitStandModel& model);
SitStandModel sitstand_from_json(const json& j);

json to_json(const ScalingSchedule& schedule);
ScalingSchedule schedule_from_json(const json& j);

/// {name, version, created_at, params:{...}}
json to_json(const TuningProfile& profile);
/// Missing params default to 0. Throws SchemaMismatch on bad types, OutOfBounds on bad values.
TuningProfile profile_from_json(const json& j);

json to_json(const BundleConfig& config);
/// Overlays the keys present in `j` onto `base`.
BundleConfig config_from_json(const json& j, BundleConfig base = default_bundle_config());
BundleConfig load_config(const std::string& path);

json to_json(const ModelBundle& bundle);
ModelBundle bundle_from_json(const json& j);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view bytes);

}  // namespace ptune::io
