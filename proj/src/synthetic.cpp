#include "ptune/synthetic.hpp"

#include <cmath>
#include <map>
#include <random>

#include "ptune/polynomial.hpp"

namespace ptune::synthetic {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double bump(double s, double centre, double width) {
  const double z = (s - centre) / width;
  return std::exp(-0.5 * z * z);
}

// Rounds through degrees so the value survives the degree-based CSV exactly.
double via_degrees(double rad) { return (rad / kDegToRad) * kDegToRad; }

PhaseSeries via_degrees(const PhaseSeries& series) {
  PhaseSeries::Values v = series.values();
  for (double& x : v) x = via_degrees(x);
  return PhaseSeries(series.kind(), v);
}

double smoothstep(double s) { return s * s * (3.0 - 2.0 * s); }

struct SmoothNoise {
  std::array<double, 3> amp{};
  std::array<double, 3> phase{};

  double operator()(double s) const {
    double v = 0.0;
    for (std::size_t h = 0; h < amp.size(); ++h) v += amp[h] * std::sin(kTwoPi * static_cast<double>(h + 1) * s + phase[h]);
    return v;
  }
};

SmoothNoise draw_noise(std::mt19937_64& rng, double amplitude) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, kTwoPi);
  SmoothNoise n;
  for (std::size_t h = 0; h < n.amp.size(); ++h) {
    n.amp[h] = amplitude * normal(rng) / static_cast<double>(h + 1);
    n.phase[h] = uniform(rng);
  }
  return n;
}

// Persistent subject individuality: two bumps with subject-specific amplitude and timing.
struct SubjectTrait {
  double a1 = 0.0, c1 = 0.3, a2 = 0.0, c2 = 0.55;
  double angle_a = 0.0, angle_c = 0.7;

  double torque(double s) const { return a1 * bump(s, c1, 0.08) + a2 * bump(s, c2, 0.06); }
  double angle(double s) const { return angle_a * bump(s, angle_c, 0.1); }
};

}  // namespace

double stride_duration(const Task& task) { return 1.1 / std::sqrt(task.speed); }

double mean_angle(Joint joint, const Task& task, double s) {
  const double speed_gain = 1.0 + 0.3 * (task.speed - 1.0);
  const double g = task.incline;
  double deg = 0.0;
  switch (joint) {
    case Joint::knee:
      deg = 4.0 + speed_gain * (14.0 * bump(s, 0.15, 0.07) + 58.0 * bump(s, 0.72, 0.11)) + 0.9 * g * bump(s, 0.1, 0.12) +
            0.4 * g * bump(s, 0.75, 0.1);
      break;
    case Joint::ankle:
      deg = -2.0 + speed_gain * (12.0 * bump(s, 0.45, 0.12) - 20.0 * bump(s, 0.64, 0.05)) + 0.6 * g * bump(s, 0.35, 0.2);
      break;
    case Joint::hip:
      deg = 10.0 + speed_gain * 22.0 * std::cos(kTwoPi * (s - 0.02)) + 1.0 * g;
      break;
  }
  return deg * kDegToRad;
}

ImpedancePolynomials truth(Joint joint, const Task& task) {
  const double g = task.incline / 10.0;
  const double v = task.speed - 1.0;
  ImpedancePolynomials p;
  p.task = task;
  p.joint = joint;
  switch (joint) {
    case Joint::ankle:
      p.k = {1.5 + 0.2 * g, 6.0 + 1.0 * v, 2.0 + 0.5 * g, -6.0, 1.0};
      p.e = {-0.05 - 0.02 * g, -0.2, 0.1 + 0.05 * v, 0.1, -0.05};
      p.b = {0.05, 0.05 + 0.01 * g, -0.04, 0.0, 0.0};
      break;
    case Joint::knee:
      p.k = {0.8 + 0.05 * g, -1.0 + 0.3 * v, 6.0, -3.0 + 0.5 * g, 0.5};
      p.e = {0.25 + 0.03 * g, -0.3, 0.2, 0.0, 0.05 * v};
      p.b = {0.04, 0.03 + 0.01 * v, 0.0, 0.0, 0.0};
      break;
    case Joint::hip:
      p.k = {1.2, 1.0, -0.5 + 0.2 * g, 0.0, 0.0};
      p.e = {0.2 + 0.05 * g, -0.6, 0.2, 0.0, 0.0};
      p.b = {0.06, 0.0, 0.0, 0.0, 0.0};
      break;
  }
  return p;
}

SitStandTruth sitstand_truth() {
  SitStandTruth t;
  t.k = {2.0, 1.0, -1.5, 0.5, 0.0};
  t.b = {0.08, 0.02, 0.0, 0.0, 0.0};
  t.e1 = {1.2, -0.8, -0.3, 0.0, 0.0};
  t.e2 = {0.15, -0.1, 0.0, 0.0, 0.0};
  return t;
}

double sitstand_knee_angle(double s, double amplitude_scale) {
  return 0.09 + amplitude_scale * 1.48 * (1.0 - smoothstep(s));
}

Dataset make_dataset(const Options& options) {
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::map<StrideKey, StrideSet> sets;
  for (int si = 0; si < options.subjects; ++si) {
    char name[16];
    std::snprintf(name, sizeof name, "AB%02d", si + 1);
    const SubjectId subject(name);

    std::map<Joint, SubjectTrait> traits;
    for (Joint joint : options.joints) {
      SubjectTrait t;
      t.a1 = options.torque_individuality * normal(rng);
      t.c1 = 0.2 + 0.2 * unit(rng);
      t.a2 = options.torque_individuality * normal(rng);
      t.c2 = 0.45 + 0.15 * unit(rng);
      t.angle_a = options.angle_individuality_deg * kDegToRad * normal(rng);
      t.angle_c = 0.6 + 0.2 * unit(rng);
      traits[joint] = t;
    }

    for (double speed : options.speeds) {
      for (double incline : options.inclines) {
        const Task task{speed, incline};
        const double duration = stride_duration(task);
        for (Joint joint : options.joints) {
          const auto& trait = traits[joint];
          const auto poly = truth(joint, task);
          StrideSet set{subject, task, joint, {}};
          for (int k = 0; k < options.strides_per_task; ++k) {
            const SmoothNoise angle_noise = draw_noise(rng, options.angle_noise_deg * kDegToRad);
            const SmoothNoise torque_noise = draw_noise(rng, options.torque_noise);
            PhaseSeries::Values angle{}, torque{};
            for (std::size_t i = 0; i < kPhasePoints; ++i) {
              const double s = phase_at(i);
              angle[i] = via_degrees(mean_angle(joint, task, s) + trait.angle(s) + angle_noise(s));
            }
            Stride stride;
            stride.id = std::to_string(k + 1);
            stride.duration_s = duration;
            stride.angle = PhaseSeries(SignalKind::angle, angle);
            stride.velocity = via_degrees(differentiate(stride.angle, duration));
            for (std::size_t i = 0; i < kPhasePoints; ++i) {
              const double s = phase_at(i);
              const auto z = eval_impedance(poly, s);
              torque[i] = impedance_torque(z.stiffness, z.equilibrium, z.damping, angle[i], stride.velocity[i]) +
                          trait.torque(s) + torque_noise(s);
            }
            stride.torque = PhaseSeries(SignalKind::torque, torque);
            set.strides.push_back(std::move(stride));
          }
          sets[StrideKey{subject, task, joint}] = std::move(set);
        }
      }
    }

    if (options.sitstand_motions > 0) {
      const auto t = sitstand_truth();
      StrideSet set{subject, kSitStandTask, Joint::knee, {}};
      for (int k = 0; k < options.sitstand_motions; ++k) {
        const bool rising = k % 2 == 0;
        const double duration = 1.6 + 0.4 * unit(rng);
        const double amplitude = 1.0 + 0.05 * normal(rng);
        PhaseSeries::Values angle{}, velocity{}, torque{};
        for (std::size_t i = 0; i < kPhasePoints; ++i) {
          const double s = phase_at(i);
          angle[i] = via_degrees(sitstand_knee_angle(s, amplitude));
          const double dtheta_ds = -amplitude * 1.48 * 6.0 * s * (1.0 - s);
          velocity[i] = via_degrees((rising ? 1.0 : -1.0) * dtheta_ds / duration);
          const double f = std::clamp((velocity[i] - t.relu_lo) / (t.relu_hi - t.relu_lo), 0.0, 1.0);
          const double eq = poly::horner(t.e1, s) + f * poly::horner(t.e2, s);
          torque[i] = impedance_torque(poly::horner(t.k, s), eq, poly::horner(t.b, s), angle[i], velocity[i]) +
                      0.2 * options.torque_noise * normal(rng);
        }
        Stride stride;
        stride.id = (rising ? "rise" : "lower") + std::to_string(k / 2 + 1);
        stride.duration_s = duration;
        stride.angle = PhaseSeries(SignalKind::angle, angle);
        stride.velocity = PhaseSeries(SignalKind::velocity, velocity);
        stride.torque = PhaseSeries(SignalKind::torque, torque);
        set.strides.push_back(std::move(stride));
      }
      sets[StrideKey{subject, kSitStandTask, Joint::knee}] = std::move(set);
    }
  }
  return Dataset(std::move(sets), true);
}

}  // namespace ptune::synthetic
