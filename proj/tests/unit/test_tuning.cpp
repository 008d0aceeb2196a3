#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ptune/error.hpp"
#include "ptune/polynomial.hpp"
#include "ptune/tuning.hpp"
#include "support.hpp"

using namespace ptune;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;
}

double simpson(auto f, double a, double b, int n = 20000) {
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return acc * h / 3.0;
}

std::map<Task, PhaseSeries> ankle_torques(const Dataset& d) {
  std::map<Task, PhaseSeries> out;
  for (const auto& [task, stride] : reference_trajectories(d, Joint::ankle, default_bundle_config())) {
    out.emplace(task, stride.torque);
  }
  return out;
}

double stance_peak(const PhaseSeries& torque, double stance_end = kDefaultToeOff) {
  double m = 0.0;
  for (std::size_t i = 0; i < kPhasePoints && phase_at(i) <= stance_end + 1e-12; ++i) m = std::max(m, std::abs(torque[i]));
  return m;
}

bool same_walking(const ModelBundle& a, const ModelBundle& b, Joint joint) {
  return a.walking_impedance.at(joint) == b.walking_impedance.at(joint) &&
         a.walking_kinematics.at(joint) == b.walking_kinematics.at(joint);
}

const ModelBundle& tf01() {
  static const ModelBundle b = [] {
    TuningParams p;
    p.swing_knee_flexion_deg = 0.0;
    p.pushoff_pct = 20.0;
    p.stance_flexion_resistance_pct = 10.0;
    p.sit_to_stand_pct = 20.0;
    p.stand_to_sit_pct = -10.0;
    return regenerate(test::baseline(), TuningProfile(p, "TF01"), test::dataset()).bundle;
  }();
  return b;
}

}  // namespace

TEST_SUITE("tuning") {
  TEST_CASE("parameter bounds and validation") {
    CHECK(parameter_bounds(Parameter::swing_knee_flexion).lo == -10.0);
    CHECK(parameter_bounds(Parameter::swing_knee_flexion).hi == 30.0);
    for (Parameter p : {Parameter::stance_flexion_resistance, Parameter::pushoff, Parameter::sit_to_stand,
                        Parameter::stand_to_sit}) {
      CHECK(parameter_bounds(p).lo == -50.0);
      CHECK(parameter_bounds(p).hi == 60.0);
      CHECK(parameter_from_string(to_string(p)) == p);
    }
    const TuningProfile zero;
    CHECK_NOTHROW(zero.with(Parameter::pushoff, 60.0));
    CHECK(code_of([&] { zero.with(Parameter::pushoff, 61.0); }) == ErrorCode::OutOfBounds);
    CHECK(code_of([&] { zero.with(Parameter::swing_knee_flexion, -10.5); }) == ErrorCode::OutOfBounds);
    CHECK(code_of([&] { zero.with(Parameter::stance_flexion_resistance, std::nan("")); }) == ErrorCode::OutOfBounds);
    CHECK_NOTHROW(zero.with(Parameter::sit_to_stand, 30.0).with(Parameter::stand_to_sit, -30.0));
    CHECK(code_of([&] { zero.with(Parameter::sit_to_stand, 40.0).with(Parameter::stand_to_sit, -30.0); }) ==
          ErrorCode::OutOfBounds);
    CHECK(code_of([] { parameter_from_string("gain"); }) == ErrorCode::NotFound);
  }

  TEST_CASE("presets are 80 percent of the bound") {
    CHECK(preset_profile(Parameter::pushoff, PresetLevel::high).get(Parameter::pushoff) == doctest::Approx(48.0));
    CHECK(preset_profile(Parameter::swing_knee_flexion, PresetLevel::low).get(Parameter::swing_knee_flexion) ==
          doctest::Approx(-8.0));
    CHECK(preset_profile(Parameter::stand_to_sit, PresetLevel::low).get(Parameter::stand_to_sit) ==
          doctest::Approx(-40.0));
    CHECK(preset_value(-50.0, 50.0, PresetLevel::high) == doctest::Approx(40.0));
    const TuningProfile p = preset_profile(Parameter::pushoff, PresetLevel::high);
    for (Parameter other : kParameters) {
      if (other != Parameter::pushoff) CHECK(p.get(other) == 0.0);
    }
    CHECK(preset_level_from_string("HIGH") == PresetLevel::high);
    CHECK(code_of([] { preset_level_from_string("medium"); }) == ErrorCode::NotFound);
  }

  TEST_CASE("flexion spline") {
    const double peak = phase_at(110);
    SUBCASE("zero is all zeros") {
      const TuningSpline s = build_flexion_spline(0.0, peak);
      for (double v : s.values) CHECK(v == 0.0);
    }
    SUBCASE("30 degrees peaks at 30 degrees and vanishes at the edges") {
      const TuningSpline s = build_flexion_spline(30.0, peak);
      CHECK(s.kind == SplineKind::additive);
      CHECK(std::abs(*std::max_element(s.values.begin(), s.values.end()) - 30.0 * kDegToRad) <= 1e-12);
      CHECK(std::abs(s.values[110] - 30.0 * kDegToRad) <= 1e-12);
      CHECK(raised_cosine(s.s_lo, peak) == 0.0);
      CHECK(raised_cosine(s.s_hi, peak) == 0.0);
      for (std::size_t i = 0; i < kPhasePoints; ++i) {
        if (phase_at(i) <= s.s_lo || phase_at(i) >= s.s_hi) CHECK(s.values[i] == 0.0);
        CHECK(s.values[i] >= 0.0);
      }
    }
    SUBCASE("area is amplitude times half width") {
      const double amp = 20.0 * kDegToRad;
      const double area = simpson([&](double x) { return amp * raised_cosine(x, peak); }, 0.0, 1.0);
      CHECK(std::abs(area - amp * kSplineHalfWidth) <= 1e-9);
      // the sampled spline integrates to the same value on the grid
      const TuningSpline s = build_flexion_spline(20.0, peak);
      double trap = 0.0;
      for (std::size_t i = 1; i < kPhasePoints; ++i) trap += 0.5 * (s.values[i] + s.values[i - 1]) * (1.0 / 149.0);
      CHECK(std::abs(trap - amp * kSplineHalfWidth) <= 1e-3 * amp * kSplineHalfWidth);
    }
    CHECK(code_of([&] { build_flexion_spline(31.0, peak); }) == ErrorCode::OutOfBounds);
  }

  TEST_CASE("push-off spline") {
    const double peak = phase_at(80);
    const TuningSpline unit = build_pushoff_spline(0.0, peak);
    for (double v : unit.values) CHECK(v == 1.0);

    const TuningSpline up = build_pushoff_spline(50.0, peak);
    CHECK(up.kind == SplineKind::multiplicative);
    CHECK(std::abs(up.values[80] - 1.5) <= 1e-15);
    CHECK(*std::max_element(up.values.begin(), up.values.end()) == up.values[80]);
    for (std::size_t i = 0; i < kPhasePoints; ++i) {
      if (phase_at(i) <= up.s_lo || phase_at(i) >= up.s_hi) CHECK(up.values[i] == 1.0);
    }
    CHECK(std::abs(build_pushoff_spline(-50.0, peak).values[80] - 0.5) <= 1e-15);
    CHECK(code_of([&] { build_pushoff_spline(-51.0, peak); }) == ErrorCode::OutOfBounds);
  }

  TEST_CASE("push-off propagation") {
    const Dataset& d = test::dataset();
    const BundleConfig config = default_bundle_config();
    const auto torques = ankle_torques(d);
    const double peak = pushoff_peak_phase(d, config);
    const Task base = config.baseline_task;

    SUBCASE("unit gain is the identity") {
      const auto out = propagate_pushoff(torques, build_pushoff_spline(0.0, peak), base);
      for (const auto& [task, t] : torques) CHECK(out.at(task) == t);
    }
    SUBCASE("baseline peak scales by the gain") {
      for (double pct : {5.0, 20.0, 60.0}) {
        const auto out = propagate_pushoff(torques, build_pushoff_spline(pct, peak), base);
        const double ratio = stance_peak(out.at(base)) / stance_peak(torques.at(base));
        CHECK(std::abs(ratio - (1.0 + pct / 100.0)) <= 1e-9);
      }
    }
    SUBCASE("every task gets the same additive offset") {
      const TuningSpline spline = build_pushoff_spline(35.0, peak);
      const auto out = propagate_pushoff(torques, spline, base);
      const PhaseSeries& tb = torques.at(base);
      for (const auto& [task, t] : torques) {
        for (std::size_t i = 0; i < kPhasePoints; ++i) {
          const double psi = tb[i] * spline.values[i] - tb[i];
          CHECK(std::abs((out.at(task)[i] - t[i]) - psi) <= 1e-12);
          const double s = phase_at(i);
          if (s <= spline.s_lo || s >= spline.s_hi) CHECK(out.at(task)[i] == t[i]);
        }
      }
    }
    SUBCASE("missing baseline task") {
      auto partial = torques;
      partial.erase(base);
      CHECK(code_of([&] { propagate_pushoff(partial, build_pushoff_spline(10.0, peak), base); }) ==
            ErrorCode::MissingBaselineTask);
    }
  }

  TEST_CASE("stance resistance scales the heel-strike floor") {
    const ConstraintProfile c = default_constraint_profile();
    CHECK(apply_stance_resistance(c, 0.0) == c);
    CHECK(apply_stance_resistance(c, 25.0).heel_strike_k_min == doctest::Approx(1.25 * c.heel_strike_k_min));
    std::vector<std::string> warnings;
    CHECK(apply_stance_resistance(c, -50.0, &warnings).heel_strike_k_min == doctest::Approx(0.5 * c.heel_strike_k_min));
    CHECK(warnings.empty());

    const ConstraintProfile low = ConstraintProfile::flat(0.2, 0.3, 0.0, 0.15);
    const ConstraintProfile clipped = apply_stance_resistance(low, -50.0, &warnings);
    CHECK(clipped.heel_strike_k_min == low.k_min[0]);
    CHECK(warnings.size() == 1);
    CHECK(code_of([&] { apply_stance_resistance(c, 70.0); }) == ErrorCode::OutOfBounds);
  }

  TEST_CASE("affected models") {
    const BundleConfig config = default_bundle_config();
    const TuningParams zero;
    auto only = [&](Parameter p, double v) {
      TuningParams next;
      next.set(p, v);
      return affected_models(zero, next, config);
    };
    CHECK(only(Parameter::stance_flexion_resistance, 10.0) == std::set<std::string>{"impedance.knee"});
    CHECK(only(Parameter::swing_knee_flexion, 10.0) == std::set<std::string>{"kinematics.knee"});
    CHECK(only(Parameter::pushoff, 10.0) == std::set<std::string>{"impedance.ankle"});
    CHECK(only(Parameter::sit_to_stand, 10.0) == std::set<std::string>{"sitstand"});
    CHECK(only(Parameter::stand_to_sit, -10.0) == std::set<std::string>{"sitstand"});
    CHECK(affected_models(zero, zero, config).empty());
  }

  TEST_CASE("identical profile refits nothing") {
    const ModelBundle& b = test::baseline();
    const Regeneration r = regenerate(b, b.profile, test::dataset());
    CHECK(r.regenerated.empty());
    CHECK(r.bundle.hash() == b.hash());
    CHECK(r.bundle.profile.version == b.profile.version);
  }

  TEST_CASE("zero profile after a change restores the baseline bitwise") {
    const ModelBundle& b = test::baseline();
    const Regeneration back = regenerate(tf01(), TuningProfile(TuningParams{}), test::dataset());
    CHECK(back.bundle.walking_impedance == b.walking_impedance);
    CHECK(back.bundle.walking_kinematics == b.walking_kinematics);
    CHECK(back.bundle.sitstand == b.sitstand);
    CHECK(back.bundle.schedule == b.schedule);
    CHECK(back.bundle.hash() == b.hash());
  }

  TEST_CASE("sit-stand change leaves walking models untouched") {
    const ModelBundle& b = test::baseline();
    const Regeneration r =
        regenerate(b, b.profile.with(Parameter::sit_to_stand, 30.0).with(Parameter::stand_to_sit, 5.0), test::dataset());
    CHECK(r.regenerated == std::vector<std::string>{"sitstand"});
    for (Joint joint : {Joint::ankle, Joint::knee}) CHECK(same_walking(r.bundle, b, joint));
    CHECK(r.bundle.schedule.sit_to_stand_scale() == doctest::Approx(0.30));
    CHECK(r.bundle.schedule.stand_to_sit_scale() == doctest::Approx(0.05));
    // the sit-stand fit itself is on unscaled torques
    CHECK(r.bundle.sitstand == b.sitstand);
  }

  TEST_CASE("profile with push-off, stance and sit-stand changes") {
    const ModelBundle& b = test::baseline();
    const Regeneration r = regenerate(b, tf01().profile, test::dataset());
    // tf01 was built from the baseline with the same profile, so compare against a fresh run
    CHECK(r.regenerated == std::vector<std::string>{"impedance.ankle", "impedance.knee", "sitstand"});
    CHECK(r.bundle.walking_kinematics == b.walking_kinematics);
    CHECK(r.bundle.walking_impedance.at(Joint::ankle) != b.walking_impedance.at(Joint::ankle));
    CHECK(r.bundle.profile.version == b.profile.version + 1);
    CHECK(r.bundle.hash() != b.hash());
    CHECK(r.bundle.hash() == tf01().hash());
  }

  TEST_CASE("stance resistance raises the knee heel-strike stiffness") {
    const ModelBundle& b = test::baseline();
    const Regeneration r = regenerate(b, b.profile.with(Parameter::stance_flexion_resistance, 25.0), test::dataset());
    CHECK(r.regenerated == std::vector<std::string>{"impedance.knee"});
    const double hs = b.config.constraints_for(Joint::knee).heel_strike_k_min;
    for (const auto& [task, poly] : r.bundle.walking_impedance.at(Joint::knee)) {
      INFO(task.label());
      CHECK(poly::horner(poly.k, 0.0) >= 1.25 * hs - 1e-9);
    }
    CHECK(r.bundle.walking_impedance.at(Joint::ankle) == b.walking_impedance.at(Joint::ankle));
  }

  TEST_CASE("swing flexion only refits the knee kinematics") {
    const ModelBundle& b = test::baseline();
    const Regeneration r = regenerate(b, b.profile.with(Parameter::swing_knee_flexion, 15.0), test::dataset());
    CHECK(r.regenerated == std::vector<std::string>{"kinematics.knee"});
    CHECK(r.bundle.walking_impedance == b.walking_impedance);
    CHECK(r.bundle.walking_kinematics.at(Joint::ankle) == b.walking_kinematics.at(Joint::ankle));
    const Task t = b.config.baseline_task;
    const double s = flexion_peak_phase(test::dataset(), b.config);
    const double shift = eval_model(r.bundle.walking_kinematics.at(Joint::knee), s, t) -
                         eval_model(b.walking_kinematics.at(Joint::knee), s, t);
    CHECK(shift == doctest::Approx(15.0 * kDegToRad).epsilon(0.1));
  }

  TEST_CASE("staged profiles mark models dirty") {
    ModelBundle b = test::baseline();
    b.stage(b.profile.with(Parameter::pushoff, 10.0));
    CHECK(b.dirty == std::set<std::string>{"impedance.ankle"});
    const TuningProfile same = b.profile;
    const Regeneration r = regenerate(b, same, test::dataset());
    CHECK(r.regenerated == std::vector<std::string>{"impedance.ankle"});
    CHECK(r.bundle.dirty.empty());
    CHECK(b.dirty.size() == 1);  // input untouched
  }

  TEST_CASE("VAF floor rejects a regeneration") {
    ModelBundle b = test::baseline();
    b.config.vaf_floor[Joint::ankle] = 1.01;
    CHECK(code_of([&] { regenerate(b, b.profile.with(Parameter::pushoff, 10.0), test::dataset()); }) ==
          ErrorCode::RegenerationRejected);
  }

  TEST_CASE("versions increase with each effective change") {
    const ModelBundle& b = test::baseline();
    const Regeneration one = regenerate(b, b.profile.with(Parameter::sit_to_stand, 10.0), test::dataset());
    const Regeneration two = regenerate(one.bundle, one.bundle.profile.with(Parameter::sit_to_stand, 20.0), test::dataset());
    const Regeneration same = regenerate(two.bundle, two.bundle.profile, test::dataset());
    CHECK(one.bundle.profile.version == b.profile.version + 1);
    CHECK(two.bundle.profile.version == b.profile.version + 2);
    CHECK(same.bundle.profile.version == two.bundle.profile.version);
  }
}
