#include <doctest.h>

#include <fstream>

#include "ptune/error.hpp"
#include "ptune/serialize.hpp"
#include "support.hpp"

using namespace ptune;
using io::json;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_SUITE("serialize") {
  TEST_CASE("sha256 test vectors") {
    CHECK(io::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("model round trips") {
    const ModelBundle& b = test::baseline();
    const Task t{0.8, -5.0};
    CHECK(io::task_from_json(io::to_json(t)) == t);

    const ImpedancePolynomials& poly = b.walking_impedance.at(Joint::ankle).at(t);
    CHECK(io::impedance_from_json(io::to_json(poly)) == poly);

    const ConstraintProfile c = default_constraint_profile();
    CHECK(io::constraints_from_json(io::to_json(c)) == c);
    ConstraintProfile shaped = c;
    for (std::size_t i = 0; i < kPhasePoints; ++i) shaped.k_min[i] = 0.2 + 0.001 * static_cast<double>(i);
    CHECK(io::constraints_from_json(io::to_json(shaped)) == shaped);

    for (const auto& [joint, m] : b.walking_kinematics) CHECK(io::kinematics_from_json(io::to_json(m)) == m);
    REQUIRE(b.sitstand.has_value());
    CHECK(io::sitstand_from_json(io::to_json(*b.sitstand)) == *b.sitstand);

    const ScalingSchedule s(0.2, -0.1, 0.08);
    CHECK(io::schedule_from_json(io::to_json(s)) == s);
  }

  TEST_CASE("profile round trip and errors") {
    const TuningProfile p = TuningProfile(TuningParams{}, "TF07", 3, "2026-01-02T03:04:05Z")
                                .with(Parameter::pushoff, 25.0)
                                .with(Parameter::swing_knee_flexion, -4.5);
    CHECK(io::profile_from_json(io::to_json(p)) == p);

    const TuningProfile partial = io::profile_from_json(json::parse(R"({"params": {"pushoff_pct": 12}})"));
    CHECK(partial.get(Parameter::pushoff) == 12.0);
    CHECK(partial.get(Parameter::stance_flexion_resistance) == 0.0);

    CHECK(code_of([] { io::profile_from_json(json::parse(R"({"params": {"pushoff_pct": 61}})")); }) ==
          ErrorCode::OutOfBounds);
    CHECK(code_of([] { io::profile_from_json(json::parse(R"({"params": {"pushoff_pct": "high"}})")); }) ==
          ErrorCode::SchemaMismatch);
    CHECK(code_of([] { io::profile_from_json(json::parse(R"({"params": {"gain": 1}})")); }) ==
          ErrorCode::SchemaMismatch);
    CHECK(code_of([] { io::profile_from_json(json::parse("[1, 2]")); }) == ErrorCode::SchemaMismatch);
  }

  TEST_CASE("flat and per-sample constraint forms") {
    const ConstraintProfile flat =
        io::constraints_from_json(json::parse(R"({"k_min": 0.3, "b_min": 0.01, "b_max": 0.2, "heel_strike_k_min": 1.1})"));
    CHECK(flat == ConstraintProfile::flat(0.3, 1.1, 0.01, 0.2));
    json short_grid = io::to_json(flat);
    short_grid["k_min"] = json::array({0.1, 0.2});
    CHECK(code_of([&] { io::constraints_from_json(short_grid); }) == ErrorCode::SchemaMismatch);
  }

  TEST_CASE("config round trip and overlay") {
    BundleConfig c = default_bundle_config();
    c.baseline_task = {1.2, 5.0};
    c.vaf_floor[Joint::knee] = 0.8;
    c.individual = "AB03";
    CHECK(io::config_from_json(io::to_json(c)) == c);

    const BundleConfig overlay = io::config_from_json(json::parse(R"({"baseline_task": {"speed": 0.8, "incline": 0}})"));
    CHECK(overlay.baseline_task == Task{0.8, 0.0});
    CHECK(overlay.constraints == default_bundle_config().constraints);
  }

  TEST_CASE("shipped configuration matches the defaults") {
    const BundleConfig c = io::load_config(PTUNE_SOURCE_DIR "/config/default.json");
    CHECK(c == default_bundle_config());
    CHECK(code_of([] { io::load_config("/nonexistent/config.json"); }) == ErrorCode::MissingFile);
  }

  TEST_CASE("bundle round trip is exact") {
    const ModelBundle& b = test::baseline();
    const json j = io::to_json(b);
    const ModelBundle back = io::bundle_from_json(j);
    CHECK(io::to_json(back).dump() == j.dump());
    CHECK(back.walking_impedance == b.walking_impedance);
    CHECK(back.walking_kinematics == b.walking_kinematics);
    CHECK(back.sitstand == b.sitstand);
    CHECK(back.hash() == b.hash());
    CHECK(io::bundle_from_json(json::parse(j.dump())).hash() == b.hash());

    json broken = j;
    broken.erase("walking_kinematics");
    CHECK(code_of([&] { io::bundle_from_json(broken); }) == ErrorCode::SchemaMismatch);
  }

  TEST_CASE("bundle hash covers models, parameters and constraints only") {
    const ModelBundle& b = test::baseline();
    ModelBundle renamed = b;
    renamed.profile.name = "other";
    renamed.profile.version = 9;
    renamed.profile.created_at = "2020-01-01T00:00:00Z";
    CHECK(renamed.hash() == b.hash());

    ModelBundle params = b;
    params.profile = b.profile.with(Parameter::sit_to_stand, 1.0);
    CHECK(params.hash() != b.hash());

    ModelBundle constraints = b;
    constraints.config.constraints[Joint::knee].heel_strike_k_min = 1.5;
    CHECK(constraints.hash() != b.hash());

    ModelBundle coeff = b;
    coeff.walking_impedance.at(Joint::ankle).begin()->second.b[0] += 1e-15;
    CHECK(coeff.hash() != b.hash());
  }
}
