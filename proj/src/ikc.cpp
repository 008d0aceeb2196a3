#include "ptune/ikc.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <sstream>

#include "ptune/error.hpp"

namespace ptune {

namespace {

ContributionKind contribution_kind(SignalKind kind) {
  return kind == SignalKind::torque ? ContributionKind::kinetic : ContributionKind::kinematic;
}

// Mixes the stride seed with the cell identity so every stride set gets its own partition.
std::uint64_t cell_seed(std::uint64_t seed, const StrideKey& key) {
  std::uint64_t h = seed ^ 0x9E3779B97F4A7C15ull;
  auto mix = [&h](std::uint64_t v) {
    h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  };
  for (unsigned char c : key.subject) mix(c);
  mix(static_cast<std::uint64_t>(std::llround(key.task.speed * 1000.0)));
  mix(static_cast<std::uint64_t>(std::llround(key.task.incline * 1000.0) + 100000));
  mix(static_cast<std::uint64_t>(key.joint));
  return h;
}

}  // namespace

IKC compute_ikc(const PhaseSeries& subject_mean, const PhaseSeries& loo) {
  if (subject_mean.kind() != loo.kind()) throw Error(ErrorCode::KindMismatch, "IKC operands differ in kind");
  PhaseSeries::Values d{};
  for (std::size_t i = 0; i < kPhasePoints; ++i) d[i] = subject_mean[i] - loo[i];
  IKC out;
  out.contribution = PhaseSeries(subject_mean.kind(), d);
  out.signal_kind = contribution_kind(subject_mean.kind());
  return out;
}

IKC compute_ikc(const PhaseSeries& subject_mean, const PhaseSeries& loo, const SubjectId& subject, const Task& task,
                Joint joint) {
  IKC out = compute_ikc(subject_mean, loo);
  out.subject = subject;
  out.task = task;
  out.joint = joint;
  return out;
}

PhaseSeries individualize(const PhaseSeries& loo_mean_at_task, const IKC& baseline_ikc) {
  if (loo_mean_at_task.kind() != baseline_ikc.contribution.kind()) {
    throw Error(ErrorCode::KindMismatch, "contribution kind does not match the task mean");
  }
  PhaseSeries::Values v{};
  for (std::size_t i = 0; i < kPhasePoints; ++i) v[i] = loo_mean_at_task[i] + baseline_ikc.contribution[i];
  return PhaseSeries(loo_mean_at_task.kind(), v);
}

double rmse(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size()) throw Error(ErrorCode::LengthMismatch, "RMSE operands differ in length");
  if (predicted.empty()) throw Error(ErrorCode::EmptyInput, "RMSE of empty series");
  double ss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - observed[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

double rmse(const PhaseSeries& predicted, const PhaseSeries& observed) {
  return rmse(predicted.span(), observed.span());
}

ValidationReport validate_dataset(const Dataset& dataset, const Task& baseline_task, std::uint64_t seed) {
  ValidationOptions options;
  options.baseline_task = baseline_task;
  options.seed = seed;
  return validate_dataset(dataset, options);
}

ValidationReport validate_dataset(const Dataset& dataset, const ValidationOptions& options) {
  ValidationReport report;
  report.baseline_task = options.baseline_task;
  report.seed = options.seed;

  const std::vector<Task> tasks = options.tasks.empty() ? dataset.walking_tasks() : options.tasks;
  double noise_sum = 0.0;
  std::size_t noise_count = 0;
  std::size_t pairs = 0;
  std::size_t pairs_improved = 0;

  for (Joint joint : options.joints) {
    const auto subjects = dataset.subjects_with(options.baseline_task, joint);
    if (subjects.empty()) {
      throw Error(ErrorCode::MissingBaselineTask, "no " + std::string(to_string(joint)) + " data at baseline task " +
                                                      options.baseline_task.label());
    }
    if (subjects.size() < 2) {
      throw Error(ErrorCode::InsufficientSubjects, "validation needs at least 2 subjects at the baseline task");
    }
    for (const auto& s : dataset.subjects()) {
      if (dataset.find(s, options.baseline_task, joint) == nullptr) {
        throw Error(ErrorCode::MissingBaselineTask, "subject " + s + " lacks the baseline task");
      }
    }

    JointSummary summary;
    summary.joint = joint;
    std::vector<double> individualized, untuned;

    for (const auto& subject : subjects) {
      const auto& base_set = dataset.at(subject, options.baseline_task, joint);
      const StrideKey base_key{subject, options.baseline_task, joint};
      const auto [base_a, base_b] = split_strides(base_set, cell_seed(options.seed, base_key));
      const auto base_loo = loo_mean(dataset, subject, options.baseline_task, joint, options.signal);
      const auto base_mean_a = mean_trajectory(base_a.series(options.signal));
      const IKC baseline_ikc = compute_ikc(base_mean_a, base_loo, subject, options.baseline_task, joint);

      noise_sum += rmse(base_mean_a, mean_trajectory(base_b.series(options.signal)));
      ++noise_count;

      double ind_sum = 0.0, unt_sum = 0.0;
      std::size_t n_tasks = 0;
      for (const auto& task : tasks) {
        const auto* set = dataset.find(subject, task, joint);
        if (set == nullptr || set->strides.size() < 2) continue;
        if (dataset.subjects_with(task, joint).size() < 2) continue;
        const StrideKey key{subject, task, joint};
        const auto half_b = split_strides(*set, cell_seed(options.seed, key)).second;
        const auto loo = loo_mean(dataset, subject, task, joint, options.signal);
        const IKC observed = compute_ikc(mean_trajectory(half_b.series(options.signal)), loo, subject, task, joint);

        ValidationCell cell;
        cell.subject = subject;
        cell.task = task;
        cell.joint = joint;
        cell.rmse_individualized = rmse(baseline_ikc.contribution, observed.contribution);
        cell.rmse_untuned = rmse(PhaseSeries::zeros(observed.contribution.kind()), observed.contribution);
        cell.improvement = cell.rmse_untuned - cell.rmse_individualized;
        report.cells.push_back(cell);
        individualized.push_back(cell.rmse_individualized);
        untuned.push_back(cell.rmse_untuned);
        ind_sum += cell.rmse_individualized;
        unt_sum += cell.rmse_untuned;
        ++n_tasks;
      }
      if (n_tasks == 0) continue;
      const double n = static_cast<double>(n_tasks);
      summary.subject_individualized[subject] = ind_sum / n;
      summary.subject_untuned[subject] = unt_sum / n;
      summary.subject_improvement[subject] = (unt_sum - ind_sum) / n;
      ++pairs;
      if (unt_sum - ind_sum > 0.0) ++pairs_improved;
    }
    if (individualized.empty()) continue;
    summary.mean_individualized = stats::mean(individualized);
    summary.mean_untuned = stats::mean(untuned);
    summary.mean_improvement = summary.mean_untuned - summary.mean_individualized;
    summary.improvement_pct =
        summary.mean_untuned > 0.0 ? 100.0 * summary.mean_improvement / summary.mean_untuned : 0.0;
    if (individualized.size() >= 2) summary.t_test = stats::paired_t_one_tailed(individualized, untuned);
    std::size_t improved = 0;
    for (const auto& [s, v] : summary.subject_improvement) improved += v > 0.0 ? 1 : 0;
    summary.fraction_subjects_improved =
        static_cast<double>(improved) / static_cast<double>(summary.subject_improvement.size());
    report.joints[joint] = std::move(summary);
  }
  report.fraction_pairs_improved = pairs ? static_cast<double>(pairs_improved) / static_cast<double>(pairs) : 0.0;
  report.split_noise = noise_count ? noise_sum / static_cast<double>(noise_count) : 0.0;
  return report;
}

std::string ValidationReport::to_csv() const {
  std::vector<SubjectId> subjects;
  for (const auto& [joint, summary] : joints) {
    for (const auto& [s, v] : summary.subject_individualized) {
      if (std::find(subjects.begin(), subjects.end(), s) == subjects.end()) subjects.push_back(s);
    }
  }
  std::sort(subjects.begin(), subjects.end());

  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "method,joint";
  for (const auto& s : subjects) out << ',' << s;
  out << ",average\n";
  auto emit = [&](const char* method, bool individualized_row) {
    for (const auto& [joint, summary] : joints) {
      const auto& values = individualized_row ? summary.subject_individualized : summary.subject_untuned;
      out << method << ',' << to_string(joint);
      for (const auto& s : subjects) {
        out << ',';
        if (auto it = values.find(s); it != values.end()) out << it->second;
      }
      out << ',' << (individualized_row ? summary.mean_individualized : summary.mean_untuned) << '\n';
    }
  };
  emit("individualized", true);
  emit("loo", false);
  return out.str();
}

std::string ValidationReport::to_json() const {
  nlohmann::json j;
  j["baseline_task"] = {{"speed", baseline_task.speed}, {"incline", baseline_task.incline}};
  j["seed"] = seed;
  j["fraction_pairs_improved"] = fraction_pairs_improved;
  j["split_noise"] = split_noise;
  auto& cells_json = j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    cells_json.push_back({{"subject", c.subject},
                          {"speed", c.task.speed},
                          {"incline", c.task.incline},
                          {"joint", to_string(c.joint)},
                          {"rmse_individualized", c.rmse_individualized},
                          {"rmse_untuned", c.rmse_untuned},
                          {"improvement", c.improvement}});
  }
  auto& joints_json = j["joints"] = nlohmann::json::object();
  for (const auto& [joint, s] : joints) {
    joints_json[std::string(to_string(joint))] = {
        {"mean_individualized", s.mean_individualized},
        {"mean_untuned", s.mean_untuned},
        {"mean_improvement", s.mean_improvement},
        {"improvement_pct", s.improvement_pct},
        {"t", std::isfinite(s.t_test.t) ? nlohmann::json(s.t_test.t) : nlohmann::json(s.t_test.t > 0 ? "inf" : "-inf")},
        {"p", s.t_test.p},
        {"fraction_subjects_improved", s.fraction_subjects_improved},
        {"subject_individualized", s.subject_individualized},
        {"subject_untuned", s.subject_untuned},
    };
  }
  return j.dump(2);
}

}  // namespace ptune
