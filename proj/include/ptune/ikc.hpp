#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ptune/gait_data.hpp"
#include "ptune/stats.hpp"

namespace ptune {

enum class ContributionKind { kinematic, kinetic };

/// Individual contribution: a subject's deviation from the leave-one-out mean.
struct IKC {
  PhaseSeries contribution;
  SubjectId subject;
  Task task;
  Joint joint = Joint::ankle;
  ContributionKind signal_kind = ContributionKind::kinetic;
};

IKC compute_ikc(const PhaseSeries& subject_mean, const PhaseSeries& loo_mean);
IKC compute_ikc(const PhaseSeries& subject_mean, const PhaseSeries& loo_mean, const SubjectId& subject,
                const Task& task, Joint joint);

/// LOO mean at a task shifted by the baseline contribution.
PhaseSeries individualize(const PhaseSeries& loo_mean_at_task, const IKC& baseline_ikc);

double rmse(const PhaseSeries& predicted, const PhaseSeries& observed);
double rmse(std::span<const double> predicted, std::span<const double> observed);

struct ValidationCell {
  SubjectId subject;
  Task task;
  Joint joint = Joint::ankle;
  double rmse_individualized = 0.0;
  double rmse_untuned = 0.0;
  double improvement = 0.0;  // rmse_untuned - rmse_individualized
};

struct JointSummary {
  Joint joint = Joint::ankle;
  double mean_individualized = 0.0;
  double mean_untuned = 0.0;
  double mean_improvement = 0.0;
  double improvement_pct = 0.0;
  stats::TTest t_test;
  double fraction_subjects_improved = 0.0;
  std::map<SubjectId, double> subject_individualized;
  std::map<SubjectId, double> subject_untuned;
  std::map<SubjectId, double> subject_improvement;
};

struct ValidationReport {
  Task baseline_task;
  std::uint64_t seed = 0;
  std::vector<ValidationCell> cells;  // sorted by (joint, subject, task)
  std::map<Joint, JointSummary> joints;
  /// Fraction of subject-joint pairs whose mean improvement is positive.
  double fraction_pairs_improved = 0.0;
  /// Mean RMS difference between the two half-means at the baseline task.
  double split_noise = 0.0;

  std::string to_csv() const;
  std::string to_json() const;
};

inline constexpr Task kDefaultBaselineTask{1.0, 0.0};

struct ValidationOptions {
  Task baseline_task = kDefaultBaselineTask;
  std::uint64_t seed = 1;
  std::vector<Joint> joints{Joint::ankle, Joint::knee, Joint::hip};
  SignalKind signal = SignalKind::torque;
  /// Tasks to evaluate; empty means every walking task in the dataset.
  std::vector<Task> tasks;
};

ValidationReport validate_dataset(const Dataset& dataset, const ValidationOptions& options = {});
ValidationReport validate_dataset(const Dataset& dataset, const Task& baseline_task, std::uint64_t seed);

}  // namespace ptune
