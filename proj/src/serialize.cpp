#include <algorithm>
#include "ptune/serialize.hpp"

#include <fstream>
#include <openssl/evp.h>
#include <sstream>

#include "ptune/error.hpp"

namespace ptune::io {

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  const auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("field '") + key + "': " + e.what());
  }
}

const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::SchemaMismatch, std::string("missing field '") + key + "'");
  return j.at(key);
}

template <std::size_t N>
std::array<double, N> array_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != N) {
    throw Error(ErrorCode::SchemaMismatch, std::string(what) + " must hold " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) out[i] = j[i].get<double>();
  return out;
}

PhaseSeries::Values grid_or_flat(const json& j, const char* what) {
  PhaseSeries::Values v{};
  if (j.is_number()) {
    v.fill(j.get<double>());
    return v;
  }
  return array_from<kPhasePoints>(j, what);
}

json task_list(const std::map<Task, double>& values, const char* key) {
  json out = json::array();
  for (const auto& [task, v] : values) {
    json e = to_json(task);
    e[key] = v;
    out.push_back(e);
  }
  return out;
}

std::map<Task, double> task_map(const json& j, const char* key) {
  std::map<Task, double> out;
  for (const auto& e : j) out[task_from_json(e)] = e.at(key).get<double>();
  return out;
}

json fit_options_json(const FitOptions& o) {
  return {{"stance_end", o.stance_end},
          {"ridge", o.ridge},
          {"singular_ratio", o.singular_ratio},
          {"qp", {{"tolerance", o.qp.tolerance}, {"max_iterations", o.qp.max_iterations}}}};
}

}  // namespace

json to_json(const Task& task) { return {{"speed", task.speed}, {"incline", task.incline}}; }

Task task_from_json(const json& j) {
  if (j.is_string()) return parse_task(j.get<std::string>());
  return Task{require(j, "speed").get<double>(), require(j, "incline").get<double>()};
}

json to_json(const ImpedancePolynomials& p) {
  json j = to_json(p.task);
  j["joint"] = to_string(p.joint);
  j["k"] = p.k;
  j["e"] = p.e;
  j["b"] = p.b;
  return j;
}

ImpedancePolynomials impedance_from_json(const json& j) {
  ImpedancePolynomials p;
  p.task = task_from_json(j);
  p.joint = joint_from_string(require(j, "joint").get<std::string>());
  p.k = array_from<5>(require(j, "k"), "k");
  p.e = array_from<5>(require(j, "e"), "e");
  p.b = array_from<5>(require(j, "b"), "b");
  return p;
}

// A constant profile is written as one number.
json grid_json(const PhaseSeries::Values& v) {
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) return v[0];
  return v;
}

json to_json(const ConstraintProfile& c) {
  return {{"k_min", grid_json(c.k_min)}, {"b_min", grid_json(c.b_min)}, {"b_max", grid_json(c.b_max)}, {"heel_strike_k_min", c.heel_strike_k_min}};
}

ConstraintProfile constraints_from_json(const json& j) {
  ConstraintProfile c;
  c.k_min = grid_or_flat(require(j, "k_min"), "k_min");
  c.b_min = grid_or_flat(require(j, "b_min"), "b_min");
  c.b_max = grid_or_flat(require(j, "b_max"), "b_max");
  c.heel_strike_k_min = get_or(j, "heel_strike_k_min", c.k_min[0]);
  c.validate();
  return c;
}

json to_json(const KinematicModel& m) {
  json bases = json::array();
  for (const auto& b : m.bases) bases.push_back(b);
  return {{"joint", to_string(m.joint)},
          {"speed_degree", m.speed_degree},
          {"incline_degree", m.incline_degree},
          {"normalization",
           {{"speed_lo", m.normalization.speed_lo},
            {"speed_hi", m.normalization.speed_hi},
            {"incline_lo", m.normalization.incline_lo},
            {"incline_hi", m.normalization.incline_hi}}},
          {"coefficient_order", "basis-major; per basis a0, a1, b1, ..., a10, b10; task coeffs speed-major"},
          {"bases", bases},
          {"task_coeffs", m.task_coeffs},
          {"task_vaf", task_list(m.task_vaf, "vaf")}};
}

KinematicModel kinematics_from_json(const json& j) {
  KinematicModel m;
  m.joint = joint_from_string(require(j, "joint").get<std::string>());
  m.speed_degree = require(j, "speed_degree").get<int>();
  m.incline_degree = require(j, "incline_degree").get<int>();
  const auto& n = require(j, "normalization");
  m.normalization = {n.at("speed_lo").get<double>(), n.at("speed_hi").get<double>(), n.at("incline_lo").get<double>(),
                     n.at("incline_hi").get<double>()};
  for (const auto& b : require(j, "bases")) m.bases.push_back(array_from<kFourierCoeffs>(b, "basis"));
  m.task_coeffs = require(j, "task_coeffs").get<std::vector<std::vector<double>>>();
  const auto P = static_cast<std::size_t>((m.speed_degree + 1) * (m.incline_degree + 1));
  if (m.task_coeffs.size() != m.bases.size()) throw Error(ErrorCode::SchemaMismatch, "task_coeffs and bases differ in count");
  for (const auto& c : m.task_coeffs) {
    if (c.size() != P) throw Error(ErrorCode::SchemaMismatch, "task coefficient count does not match the degrees");
  }
  m.task_vaf = task_map(get_or(j, "task_vaf", json::array()), "vaf");
  return m;
}

json to_json(const SitStandModel& m) {
  return {{"joint", to_string(m.joint)}, {"k", m.k},   {"b", m.b}, {"e1", m.e1}, {"e2", m.e2},
          {"relu_lo", m.relu_lo},        {"relu_hi", m.relu_hi}};
}

SitStandModel sitstand_from_json(const json& j) {
  SitStandModel m;
  m.joint = joint_from_string(require(j, "joint").get<std::string>());
  m.k = array_from<5>(require(j, "k"), "k");
  m.b = array_from<5>(require(j, "b"), "b");
  m.e1 = array_from<5>(require(j, "e1"), "e1");
  m.e2 = array_from<5>(require(j, "e2"), "e2");
  m.relu_lo = require(j, "relu_lo").get<double>();
  m.relu_hi = require(j, "relu_hi").get<double>();
  return m;
}

json to_json(const ScalingSchedule& s) {
  return {{"sit_to_stand_scale", s.sit_to_stand_scale()},
          {"stand_to_sit_scale", s.stand_to_sit_scale()},
          {"blend_width", s.blend_width()}};
}

ScalingSchedule schedule_from_json(const json& j) {
  return ScalingSchedule(require(j, "sit_to_stand_scale").get<double>(), require(j, "stand_to_sit_scale").get<double>(),
                         get_or(j, "blend_width", kDefaultBlendWidth));
}

json to_json(const TuningProfile& p) {
  json params;
  for (Parameter q : kParameters) params[std::string(to_string(q))] = p.get(q);
  return {{"name", p.name}, {"version", p.version}, {"created_at", p.created_at}, {"params", params}};
}

TuningProfile profile_from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaMismatch, "profile must be a JSON object");
  TuningParams params;
  const json raw = get_or(j, "params", json::object());
  if (!raw.is_object()) throw Error(ErrorCode::SchemaMismatch, "params must be an object");
  for (const auto& [key, value] : raw.items()) {
    Parameter q;
    try {
      q = parameter_from_string(key);
    } catch (const Error&) {
      throw Error(ErrorCode::SchemaMismatch, "unknown parameter '" + key + "'");
    }
    if (!value.is_number()) throw Error(ErrorCode::SchemaMismatch, "parameter '" + key + "' must be a number");
    params.set(q, value.get<double>());
  }
  return TuningProfile(params, get_or<std::string>(j, "name", "untitled"), get_or(j, "version", 0),
                       get_or<std::string>(j, "created_at", ""));
}

json to_json(const BundleConfig& c) {
  json joints = json::array();
  for (Joint joint : c.joints) joints.push_back(to_string(joint));
  json constraints = json::object();
  for (const auto& [joint, profile] : c.constraints) constraints[std::string(to_string(joint))] = to_json(profile);
  json kinematics = json::object();
  for (const auto& [joint, o] : c.kinematics) {
    kinematics[std::string(to_string(joint))] = {{"speed_degree", o.speed_degree},
                                                 {"incline_degree", o.incline_degree},
                                                 {"energy", o.energy},
                                                 {"basis_count", o.basis_count ? json(*o.basis_count) : json(nullptr)}};
  }
  json floors = json::object();
  for (const auto& [joint, v] : c.vaf_floor) floors[std::string(to_string(joint))] = v;
  return {{"baseline_task", to_json(c.baseline_task)},
          {"joints", joints},
          {"constraints", constraints},
          {"fit", fit_options_json(c.fit)},
          {"sitstand",
           {{"constraints", to_json(c.sitstand_constraints)},
            {"relu_lo", c.sitstand.relu_lo},
            {"relu_hi", c.sitstand.relu_hi},
            {"ridge", c.sitstand.ridge},
            {"theta_sit", c.calibration.theta_sit},
            {"theta_stand", c.calibration.theta_stand}}},
          {"kinematics", kinematics},
          {"spline_half_width", c.spline_half_width},
          {"vaf_floor", floors},
          {"individual", c.individual ? json(*c.individual) : json(nullptr)}};
}

BundleConfig config_from_json(const json& j, BundleConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaMismatch, "config must be a JSON object");
  try {
    if (j.contains("baseline_task")) c.baseline_task = task_from_json(j.at("baseline_task"));
    if (j.contains("joints")) {
      c.joints.clear();
      for (const auto& name : j.at("joints")) c.joints.push_back(joint_from_string(name.get<std::string>()));
    }
    if (j.contains("constraints")) {
      for (const auto& [name, value] : j.at("constraints").items()) {
        c.constraints[joint_from_string(name)] = constraints_from_json(value);
      }
    }
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      c.fit.stance_end = get_or(f, "stance_end", c.fit.stance_end);
      c.fit.ridge = get_or(f, "ridge", c.fit.ridge);
      c.fit.singular_ratio = get_or(f, "singular_ratio", c.fit.singular_ratio);
      if (f.contains("qp")) {
        c.fit.qp.tolerance = get_or(f.at("qp"), "tolerance", c.fit.qp.tolerance);
        c.fit.qp.max_iterations = get_or(f.at("qp"), "max_iterations", c.fit.qp.max_iterations);
      }
      c.sitstand.qp = c.fit.qp;
    }
    if (j.contains("sitstand")) {
      const auto& s = j.at("sitstand");
      if (s.contains("constraints")) c.sitstand_constraints = constraints_from_json(s.at("constraints"));
      c.sitstand.relu_lo = get_or(s, "relu_lo", c.sitstand.relu_lo);
      c.sitstand.relu_hi = get_or(s, "relu_hi", c.sitstand.relu_hi);
      c.sitstand.ridge = get_or(s, "ridge", c.sitstand.ridge);
      c.calibration.theta_sit = get_or(s, "theta_sit", c.calibration.theta_sit);
      c.calibration.theta_stand = get_or(s, "theta_stand", c.calibration.theta_stand);
    }
    if (j.contains("kinematics")) {
      for (const auto& [name, value] : j.at("kinematics").items()) {
        const Joint joint = joint_from_string(name);
        KinematicOptions o = c.kinematics_for(joint);
        o.speed_degree = get_or(value, "speed_degree", o.speed_degree);
        o.incline_degree = get_or(value, "incline_degree", o.incline_degree);
        o.energy = get_or(value, "energy", o.energy);
        if (value.contains("basis_count")) {
          o.basis_count = value.at("basis_count").is_null()
                              ? std::nullopt
                              : std::optional<std::size_t>(value.at("basis_count").get<std::size_t>());
        }
        c.kinematics[joint] = o;
      }
    }
    c.spline_half_width = get_or(j, "spline_half_width", c.spline_half_width);
    if (j.contains("vaf_floor")) {
      for (const auto& [name, value] : j.at("vaf_floor").items()) c.vaf_floor[joint_from_string(name)] = value.get<double>();
    }
    if (j.contains("individual")) {
      c.individual = j.at("individual").is_null() ? std::nullopt
                                                  : std::optional<SubjectId>(j.at("individual").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("config: ") + e.what());
  }
  if (!(c.sitstand.relu_lo < c.sitstand.relu_hi)) throw Error(ErrorCode::InvalidArgument, "config: relu_lo >= relu_hi");
  if (!(c.fit.stance_end > 0.0 && c.fit.stance_end < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "config: stance_end must lie in (0, 1)");
  }
  return c;
}

BundleConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingFile, "cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, "config " + path + ": " + e.what());
  }
  return config_from_json(j);
}

json to_json(const ModelBundle& b) {
  json impedance = json::object();
  for (const auto& [joint, per_task] : b.walking_impedance) {
    json list = json::array();
    for (const auto& [task, poly] : per_task) {
      json e = to_json(poly);
      const auto& vafs = b.impedance_vaf.at(joint);
      if (auto it = vafs.find(task); it != vafs.end()) e["vaf"] = it->second;
      list.push_back(e);
    }
    impedance[std::string(to_string(joint))] = list;
  }
  json kinematics = json::object();
  for (const auto& [joint, model] : b.walking_kinematics) kinematics[std::string(to_string(joint))] = to_json(model);
  json model_vaf = json::object();
  for (const auto& [id, v] : b.model_vaf) model_vaf[id] = v;
  return {{"config", to_json(b.config)},
          {"profile", to_json(b.profile)},
          {"walking_impedance", impedance},
          {"walking_kinematics", kinematics},
          {"sitstand", b.sitstand ? to_json(*b.sitstand) : json(nullptr)},
          {"sitstand_vaf", b.sitstand_vaf},
          {"schedule", to_json(b.schedule)},
          {"model_vaf", model_vaf},
          {"dirty", b.dirty}};
}

ModelBundle bundle_from_json(const json& j) {
  ModelBundle b;
  try {
    b.config = config_from_json(require(j, "config"));
    b.profile = profile_from_json(require(j, "profile"));
    for (const auto& [name, list] : require(j, "walking_impedance").items()) {
      const Joint joint = joint_from_string(name);
      auto& polys = b.walking_impedance[joint];
      auto& vafs = b.impedance_vaf[joint];
      for (const auto& e : list) {
        const auto poly = impedance_from_json(e);
        polys[poly.task] = poly;
        if (e.contains("vaf")) vafs[poly.task] = e.at("vaf").get<double>();
      }
    }
    for (const auto& [name, value] : require(j, "walking_kinematics").items()) {
      b.walking_kinematics[joint_from_string(name)] = kinematics_from_json(value);
    }
    if (!require(j, "sitstand").is_null()) b.sitstand = sitstand_from_json(j.at("sitstand"));
    b.sitstand_vaf = get_or(j, "sitstand_vaf", 0.0);
    b.schedule = schedule_from_json(require(j, "schedule"));
    const json model_vaf = get_or(j, "model_vaf", json::object());
    for (const auto& [id, v] : model_vaf.items()) b.model_vaf[id] = v.get<double>();
    b.dirty = get_or(j, "dirty", std::set<std::string>{});
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("bundle: ") + e.what());
  }
  return b;
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::InvalidArgument, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace ptune::io

namespace ptune {

std::string ModelBundle::hash() const {
  const io::json full = io::to_json(*this);
  io::json content = {{"walking_impedance", full.at("walking_impedance")},
                      {"walking_kinematics", full.at("walking_kinematics")},
                      {"sitstand", full.at("sitstand")},
                      {"schedule", full.at("schedule")},
                      {"params", full.at("profile").at("params")},
                      {"constraints", full.at("config").at("constraints")},
                      {"sitstand_constraints", full.at("config").at("sitstand").at("constraints")}};
  // Fit quality figures are derived data; keep them out of the digest.
  for (auto& [_, list] : content["walking_impedance"].items()) {
    for (auto& e : list) e.erase("vaf");
  }
  for (auto& [_, model] : content["walking_kinematics"].items()) model.erase("task_vaf");
  return io::sha256_hex(content.dump());
}

}  // namespace ptune
