#include "ptune/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <spdlog/spdlog.h>

#include "ptune/error.hpp"
#include "ptune/polynomial.hpp"

namespace ptune {

namespace {

using json = nlohmann::json;

// Bracketing nodes and weight of the upper node along one axis.
struct Bracket {
  double lo = 0.0, hi = 0.0, t = 0.0;
};

Bracket bracket(const std::vector<double>& nodes, double x) {
  if (nodes.size() == 1 || x <= nodes.front()) return {nodes.front(), nodes.front(), 0.0};
  if (x >= nodes.back()) return {nodes.back(), nodes.back(), 0.0};
  const auto it = std::upper_bound(nodes.begin(), nodes.end(), x);
  const double hi = *it, lo = *(it - 1);
  return {lo, hi, (x - lo) / (hi - lo)};
}

Coeffs mix(const Coeffs& a, const Coeffs& b, double t) {
  Coeffs out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + t * (b[i] - a[i]);
  return out;
}

ImpedancePolynomials mix(const ImpedancePolynomials& a, const ImpedancePolynomials& b, double t) {
  if (t == 0.0) return a;
  ImpedancePolynomials out = a;
  out.k = mix(a.k, b.k, t);
  out.e = mix(a.e, b.e, t);
  out.b = mix(a.b, b.b, t);
  return out;
}

std::size_t peak_index(const PhaseSeries& series, std::size_t begin, std::size_t end, bool absolute) {
  std::size_t best = begin;
  for (std::size_t i = begin; i < end; ++i) {
    const double v = absolute ? std::abs(series[i]) : series[i];
    const double b = absolute ? std::abs(series[best]) : series[best];
    if (v > b) best = i;
  }
  return best;
}

double percent_change(double tuned, double baseline) {
  if (baseline == 0.0) {
    if (tuned == 0.0) return 0.0;
    throw Error(ErrorCode::InvalidArgument, "baseline peak torque is zero");
  }
  return 100.0 * (tuned - baseline) / baseline;
}

}  // namespace

WalkInput stride_input(const Dataset& dataset, const SubjectId& subject, const Task& task, std::size_t stride) {
  WalkInput out;
  for (const auto& [key, set] : dataset.strides()) {
    if (key.subject != subject || key.task != task) continue;
    if (stride >= set.strides.size()) {
      throw Error(ErrorCode::NotFound, "stride " + std::to_string(stride) + " of " + subject + " at " + task.label());
    }
    out[key.joint] = {set.strides[stride].angle, set.strides[stride].velocity};
  }
  if (out.empty()) throw Error(ErrorCode::NotFound, "no strides for " + subject + " at " + task.label());
  return out;
}

WalkInput mean_input(const Dataset& dataset, const Task& task, const std::vector<Joint>& joints) {
  WalkInput out;
  for (Joint joint : joints) {
    if (dataset.subjects_with(task, joint).empty()) continue;
    out[joint] = {population_mean(dataset, task, joint, SignalKind::angle),
                  population_mean(dataset, task, joint, SignalKind::velocity)};
  }
  return out;
}

ImpedancePolynomials interpolate_impedance(const ModelBundle& bundle, Joint joint, const Task& task) {
  const auto it = bundle.walking_impedance.find(joint);
  if (it == bundle.walking_impedance.end() || it->second.empty()) {
    throw Error(ErrorCode::MissingModel, "no impedance model for " + std::string(to_string(joint)));
  }
  const auto& grid = it->second;
  std::vector<double> speeds, inclines;
  for (const auto& [t, _] : grid) {
    speeds.push_back(t.speed);
    inclines.push_back(t.incline);
  }
  std::sort(speeds.begin(), speeds.end());
  speeds.erase(std::unique(speeds.begin(), speeds.end()), speeds.end());
  std::sort(inclines.begin(), inclines.end());
  inclines.erase(std::unique(inclines.begin(), inclines.end()), inclines.end());

  const Task clamped{std::clamp(task.speed, speeds.front(), speeds.back()),
                     std::clamp(task.incline, inclines.front(), inclines.back())};
  if (clamped != task) {
    spdlog::info("replay: task {} outside the fitted grid, clamped to {}", task.label(), clamped.label());
  }
  const Bracket bs = bracket(speeds, clamped.speed);
  const Bracket bi = bracket(inclines, clamped.incline);
  const auto node = [&](double speed, double incline) -> const ImpedancePolynomials& {
    const auto n = grid.find(Task{speed, incline});
    if (n == grid.end()) {
      throw Error(ErrorCode::MissingModel, std::string(to_string(joint)) + " impedance grid has no node at " +
                                               Task{speed, incline}.label());
    }
    return n->second;
  };
  const auto lower = mix(node(bs.lo, bi.lo), node(bs.lo, bi.hi), bi.t);
  const auto upper = bs.t == 0.0 ? lower : mix(node(bs.hi, bi.lo), node(bs.hi, bi.hi), bi.t);
  ImpedancePolynomials out = mix(lower, upper, bs.t);
  out.task = task;
  out.joint = joint;
  return out;
}

ReplayResult replay_walk(const ModelBundle& bundle, const WalkInput& input, const Task& task) {
  ReplayResult out;
  out.task = task;
  out.toe_off = bundle.config.fit.stance_end;
  out.bundle_hash = bundle.hash();
  while (out.swing_begin < kPhasePoints && phase_at(out.swing_begin) <= out.toe_off) ++out.swing_begin;

  for (const auto& [joint, state] : input) {
    const auto kin = bundle.walking_kinematics.find(joint);
    if (kin == bundle.walking_kinematics.end()) {
      throw Error(ErrorCode::MissingModel, "no kinematic model for " + std::string(to_string(joint)));
    }
    const ImpedancePolynomials poly = interpolate_impedance(bundle, joint, task);
    PhaseSeries::Values torque{}, reference{};
    for (std::size_t i = 0; i < out.swing_begin; ++i) {
      const auto z = eval_impedance(poly, phase_at(i));
      torque[i] = impedance_torque(z.stiffness, z.equilibrium, z.damping, state.angle[i], state.velocity[i]);
    }
    for (std::size_t i = out.swing_begin; i < kPhasePoints; ++i) reference[i] = eval_model(kin->second, phase_at(i), task);
    out.commanded_torque[joint] = PhaseSeries(SignalKind::torque, torque);
    out.kinematic_reference[joint] = PhaseSeries(SignalKind::angle, reference);
    out.toe_off_jump[joint] = out.swing_begin > 0 && out.swing_begin < kPhasePoints
                                  ? std::abs(reference[out.swing_begin] - state.angle[out.swing_begin - 1])
                                  : 0.0;
  }
  return out;
}

SitStandReplay replay_sitstand(const ModelBundle& bundle, const SitStandTrajectory& trajectory, Direction direction) {
  if (!bundle.sitstand) throw Error(ErrorCode::MissingModel, "bundle has no sit-stand model");
  const std::size_t n = trajectory.thigh.size();
  if (trajectory.angle.size() != n || trajectory.velocity.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "sit-stand trajectory signals differ in length");
  }
  const auto& cal = bundle.config.calibration;
  if (cal.theta_sit == cal.theta_stand) {
    throw Error(ErrorCode::DegenerateCalibration, "sitting and standing thigh angles coincide");
  }
  SitStandReplay out;
  out.direction = direction;
  out.phase.resize(n);
  out.torque.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = phase_from_thigh(trajectory.thigh[i], cal);
    out.phase[i] = s;
    out.torque[i] = eval_sitstand_torque(*bundle.sitstand, s, trajectory.angle[i], trajectory.velocity[i]) *
                    (1.0 + blended_scale(s, direction, bundle.schedule));
  }
  return out;
}

SitStandTrajectory trajectory_from_motion(const Stride& motion, const ThighCalibration& calibration) {
  SitStandTrajectory out;
  const bool rising = direction_of(motion) == Direction::rising;
  for (std::size_t k = 0; k < kPhasePoints; ++k) {
    // Motions are stored on the seated-to-standing phase grid; lowering runs it backwards in time.
    const std::size_t i = rising ? k : kPhasePoints - 1 - k;
    const double s = phase_at(i);
    out.thigh.push_back(calibration.theta_sit + s * (calibration.theta_stand - calibration.theta_sit));
    out.angle.push_back(motion.angle[i]);
    out.velocity.push_back(motion.velocity[i]);
  }
  return out;
}

double circular_phase_difference(double a, double b) {
  double d = std::fmod(a - b, 1.0);
  if (d > 0.5) d -= 1.0;
  if (d <= -0.5) d += 1.0;
  return d;
}

ComparisonReport compare(const std::vector<ReplayResult>& tuned, const std::vector<ReplayResult>& baseline,
                         const std::vector<SitStandReplay>& tuned_sitstand,
                         const std::vector<SitStandReplay>& baseline_sitstand) {
  if (tuned.size() != baseline.size()) {
    throw Error(ErrorCode::UnmatchedPairs, std::to_string(tuned.size()) + " tuned vs " +
                                               std::to_string(baseline.size()) + " baseline replays");
  }
  struct Acc {
    double peak = 0.0, rms = 0.0, shift = 0.0, ref_shift = 0.0;
    int n = 0;
  };
  std::map<std::pair<Task, Joint>, Acc> acc;
  for (std::size_t p = 0; p < tuned.size(); ++p) {
    const auto& a = tuned[p];
    const auto& b = baseline[p];
    if (a.task != b.task || a.swing_begin != b.swing_begin) {
      throw Error(ErrorCode::UnmatchedPairs, "pair " + std::to_string(p) + ": " + a.task.label() + " vs " + b.task.label());
    }
    for (const auto& [joint, ta] : a.commanded_torque) {
      const auto tb = b.commanded_torque.find(joint);
      if (tb == b.commanded_torque.end()) {
        throw Error(ErrorCode::UnmatchedPairs, "pair " + std::to_string(p) + " lacks " + std::string(to_string(joint)));
      }
      const std::size_t end = a.swing_begin;
      const std::size_t ia = peak_index(ta, 0, end, true);
      const std::size_t ib = peak_index(tb->second, 0, end, true);
      double ss = 0.0;
      for (std::size_t i = 0; i < end; ++i) ss += (ta[i] - tb->second[i]) * (ta[i] - tb->second[i]);

      const auto& ra = a.kinematic_reference.at(joint);
      const auto& rb = b.kinematic_reference.at(joint);
      const double ref_shift = end < kPhasePoints
                                   ? circular_phase_difference(phase_at(peak_index(ra, end, kPhasePoints, false)),
                                                               phase_at(peak_index(rb, end, kPhasePoints, false)))
                                   : 0.0;

      Acc& c = acc[{a.task, joint}];
      c.peak += percent_change(std::abs(ta[ia]), std::abs(tb->second[ib]));
      c.rms += end > 0 ? std::sqrt(ss / static_cast<double>(end)) : 0.0;
      c.shift += phase_at(ia) - phase_at(ib);
      c.ref_shift += ref_shift;
      ++c.n;
    }
    if (a.commanded_torque.size() != b.commanded_torque.size()) {
      throw Error(ErrorCode::UnmatchedPairs, "pair " + std::to_string(p) + " has different joints");
    }
  }

  ComparisonReport report;
  for (const auto& [key, c] : acc) {
    const double n = c.n;
    report.walking.push_back({key.first, key.second, c.peak / n, c.rms / n, c.shift / n, c.ref_shift / n});
  }

  if (tuned_sitstand.size() != baseline_sitstand.size()) {
    throw Error(ErrorCode::UnmatchedPairs, "sit-stand replays differ in count");
  }
  std::map<Direction, std::pair<double, int>> ss_acc;
  for (std::size_t p = 0; p < tuned_sitstand.size(); ++p) {
    const auto& a = tuned_sitstand[p];
    const auto& b = baseline_sitstand[p];
    if (a.direction != b.direction || a.torque.size() != b.torque.size() || a.torque.empty()) {
      throw Error(ErrorCode::UnmatchedPairs, "sit-stand pair " + std::to_string(p) + " does not match");
    }
    const auto peak = [](const std::vector<double>& v) {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      return m;
    };
    auto& [sum, n] = ss_acc[a.direction];
    sum += percent_change(peak(a.torque), peak(b.torque));
    ++n;
  }
  for (const auto& [dir, v] : ss_acc) report.sitstand_peak_change_pct[dir] = v.first / v.second;
  return report;
}

std::string replay_csv(const std::vector<ReplayResult>& results) {
  std::ostringstream out;
  out.precision(17);
  out << "task,joint,signal,phase,value\n";
  for (const auto& r : results) {
    for (const auto& [joint, torque] : r.commanded_torque) {
      for (std::size_t i = 0; i < r.swing_begin; ++i) {
        out << r.task.label() << ',' << to_string(joint) << ",commanded_torque," << phase_at(i) << ',' << torque[i] << '\n';
      }
    }
    for (const auto& [joint, ref] : r.kinematic_reference) {
      for (std::size_t i = r.swing_begin; i < kPhasePoints; ++i) {
        out << r.task.label() << ',' << to_string(joint) << ",kinematic_reference," << phase_at(i) << ',' << ref[i]
            << '\n';
      }
    }
  }
  return out.str();
}

json to_json(const ReplayResult& r) {
  json joints = json::object();
  for (const auto& [joint, torque] : r.commanded_torque) {
    const auto& ref = r.kinematic_reference.at(joint);
    joints[std::string(to_string(joint))] = {
        {"commanded_torque", std::vector<double>(torque.values().begin(), torque.values().begin() + r.swing_begin)},
        {"kinematic_reference", std::vector<double>(ref.values().begin() + r.swing_begin, ref.values().end())},
        {"toe_off_jump", r.toe_off_jump.at(joint)}};
  }
  return {{"task", {{"speed", r.task.speed}, {"incline", r.task.incline}}},
          {"toe_off", r.toe_off},
          {"swing_begin", r.swing_begin},
          {"bundle_hash", r.bundle_hash},
          {"joints", joints}};
}

std::string comparison_csv(const ComparisonReport& report) {
  std::ostringstream out;
  out.precision(17);
  out << "task,joint,peak_torque_change_pct,rms_torque_change,phase_of_peak_shift,reference_peak_shift\n";
  for (const auto& c : report.walking) {
    out << c.task.label() << ',' << to_string(c.joint) << ',' << c.peak_torque_change_pct << ',' << c.rms_torque_change
        << ',' << c.phase_of_peak_shift << ',' << c.reference_peak_shift << '\n';
  }
  for (const auto& [dir, pct] : report.sitstand_peak_change_pct) {
    out << "sitstand," << to_string(dir) << ',' << pct << ",,,\n";
  }
  return out.str();
}

json to_json(const ComparisonReport& report) {
  json walking = json::array();
  for (const auto& c : report.walking) {
    walking.push_back({{"task", {{"speed", c.task.speed}, {"incline", c.task.incline}}},
                       {"joint", to_string(c.joint)},
                       {"peak_torque_change_pct", c.peak_torque_change_pct},
                       {"rms_torque_change", c.rms_torque_change},
                       {"phase_of_peak_shift", c.phase_of_peak_shift},
                       {"reference_peak_shift", c.reference_peak_shift}});
  }
  json sitstand = json::object();
  for (const auto& [dir, pct] : report.sitstand_peak_change_pct) sitstand[std::string(to_string(dir))] = pct;
  return {{"walking", walking}, {"sitstand_peak_change_pct", sitstand}};
}

}  // namespace ptune
