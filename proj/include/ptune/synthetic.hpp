#pragma once

#include <cstdint>
#include <vector>

#include "ptune/gait_data.hpp"
#include "ptune/impedance.hpp"

namespace ptune::synthetic {

struct Options {
  std::vector<double> speeds{0.8, 1.0, 1.2};
  std::vector<double> inclines{-10.0, -5.0, 0.0, 5.0, 10.0};
  int subjects = 10;
  int strides_per_task = 30;
  std::vector<Joint> joints{Joint::ankle, Joint::knee, Joint::hip};
  /// Amplitude (N·m/kg) of each subject's persistent torque offsets, identical at every task.
  double torque_individuality = 0.1;
  /// Amplitude (deg) of persistent per-subject angle offsets.
  double angle_individuality_deg = 2.0;
  /// Per-stride smooth torque noise amplitude (N·m/kg).
  double torque_noise = 0.02;
  double angle_noise_deg = 0.3;
  /// Sit-stand motions per subject (knee only) stored under the reserved sit-stand task; 0 disables.
  int sitstand_motions = 0;
  std::uint64_t seed = 7;
};

Dataset make_dataset(const Options& options);

/// Impedance polynomials the torque generator uses for (joint, task).
ImpedancePolynomials truth(Joint joint, const Task& task);

/// Population mean joint angle (rad) at phase s for a task, before individuality.
double mean_angle(Joint joint, const Task& task, double s);

double stride_duration(const Task& task);

/// Sit-stand generator truth (knee): stiffness, damping, and the two equilibrium trajectories.
struct SitStandTruth {
  Coeffs k{}, b{}, e1{}, e2{};
  double relu_lo = 0.0;
  double relu_hi = 0.35;
};
SitStandTruth sitstand_truth();

/// Knee angle (rad) along sit-stand phase s (0 seated, 1 standing).
double sitstand_knee_angle(double s, double amplitude_scale = 1.0);

}  // namespace ptune::synthetic
