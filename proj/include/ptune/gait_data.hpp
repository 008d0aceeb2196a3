#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ptune/phase.hpp"

namespace ptune {

using SubjectId = std::string;

struct Stride {
  PhaseSeries angle;     // rad
  PhaseSeries velocity;  // rad/s
  PhaseSeries torque;    // N·m/kg
  std::string id;
  std::optional<double> duration_s;  // required when velocity is derived

  bool operator==(const Stride&) const = default;
};

struct StrideSet {
  SubjectId subject;
  Task task;
  Joint joint = Joint::ankle;
  std::vector<Stride> strides;

  std::vector<PhaseSeries> series(SignalKind kind) const;
};

struct StrideKey {
  SubjectId subject;
  Task task;
  Joint joint;

  auto operator<=>(const StrideKey&) const = default;
};

/// Immutable after load. Keys are sorted so iteration order is deterministic.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::map<StrideKey, StrideSet> strides, bool mass_normalized = true);

  const std::vector<SubjectId>& subjects() const noexcept { return subjects_; }
  /// All tasks, sit-stand included.
  const std::vector<Task>& tasks() const noexcept { return tasks_; }
  /// Tasks excluding the reserved sit-stand task.
  std::vector<Task> walking_tasks() const;
  bool mass_normalized() const noexcept { return mass_normalized_; }

  const std::map<StrideKey, StrideSet>& strides() const noexcept { return strides_; }
  const StrideSet* find(const SubjectId& subject, const Task& task, Joint joint) const;
  const StrideSet& at(const SubjectId& subject, const Task& task, Joint joint) const;

  /// Subjects with strides at (task, joint), sorted.
  std::vector<SubjectId> subjects_with(const Task& task, Joint joint) const;

  /// All strides at (task, joint) pooled across subjects, in subject order.
  StrideSet pooled(const Task& task, Joint joint) const;

  std::size_t stride_count() const;

  bool operator==(const Dataset& other) const { return strides_ == other.strides_; }

 private:
  std::map<StrideKey, StrideSet> strides_;
  std::vector<SubjectId> subjects_;
  std::vector<Task> tasks_;
  bool mass_normalized_ = true;
};

bool operator==(const StrideSet& a, const StrideSet& b);

struct LoadOptions {
  int schema_version = 1;
  double max_abs_torque_nm_kg = 10.0;
};

inline constexpr int kDatasetSchemaVersion = 1;

Dataset load_dataset(const std::filesystem::path& path, int schema_version = kDatasetSchemaVersion);
Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options);
Dataset parse_dataset(std::string_view csv, const LoadOptions& options = {});

/// Writes the CSV schema; reloading yields a bit-identical Dataset.
std::string serialize_dataset(const Dataset& dataset);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

PhaseSeries mean_trajectory(std::span<const PhaseSeries> strides);

/// Population mean at (task, joint) over all subjects: mean of per-subject means.
PhaseSeries population_mean(const Dataset& dataset, const Task& task, Joint joint, SignalKind kind);

PhaseSeries subject_mean(const Dataset& dataset, const SubjectId& subject, const Task& task, Joint joint,
                         SignalKind kind);

/// Mean of per-subject mean trajectories over every subject except `exclude_subject`.
PhaseSeries loo_mean(const Dataset& dataset, const SubjectId& exclude_subject, const Task& task, Joint joint,
                     SignalKind kind = SignalKind::torque);

/// Seeded partition into two halves; the larger half (odd counts) comes first.
std::pair<StrideSet, StrideSet> split_strides(const StrideSet& strides, std::uint64_t seed);

/// Central differences on the phase grid divided by stride duration.
PhaseSeries differentiate(const PhaseSeries& angle, double duration_s);

}  // namespace ptune
