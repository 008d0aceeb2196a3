#include "ptune/gait_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "ptune/error.hpp"

namespace ptune {

namespace {

constexpr std::array<std::string_view, 10> kColumns = {
    "subject",   "task_speed_mps", "task_incline_deg", "joint",          "stride_id",
    "stride_duration_s", "phase_index", "angle_deg", "velocity_deg_s", "torque_nm_kg"};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(std::string_view field, std::size_t row, std::string_view column) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  if (!field.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::result_out_of_range) {
    throw Error(ErrorCode::NonFiniteSample,
                "row " + std::to_string(row) + " column " + std::string(column) + " out of range");
  }
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorCode::SchemaMismatch, "row " + std::to_string(row) + " column " + std::string(column) +
                                               ": not a number '" + std::string(field) + "'");
  }
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::NonFiniteSample,
                "row " + std::to_string(row) + " column " + std::string(column) + " is not finite");
  }
  return v;
}

// Degrees value whose conversion back to radians reproduces `rad` exactly.
double to_degrees_exact(double rad) {
  const double d = rad / kDegToRad;
  if (d * kDegToRad == rad) return d;
  double up = d, down = d;
  for (int i = 0; i < 16; ++i) {
    up = std::nextafter(up, std::numeric_limits<double>::infinity());
    if (up * kDegToRad == rad) return up;
    down = std::nextafter(down, -std::numeric_limits<double>::infinity());
    if (down * kDegToRad == rad) return down;
  }
  return d;
}

void append_number(std::string& out, double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

struct PendingStride {
  StrideKey key;
  std::string id;
  std::optional<double> duration;
  std::array<double, kPhasePoints> angle{}, velocity{}, torque{};
  std::array<bool, kPhasePoints> seen{};
  std::size_t count = 0;
  bool velocity_present = false;
  bool velocity_missing = false;
  std::size_t first_row = 0;
};

}  // namespace

std::vector<PhaseSeries> StrideSet::series(SignalKind kind) const {
  std::vector<PhaseSeries> out;
  out.reserve(strides.size());
  for (const auto& s : strides) {
    switch (kind) {
      case SignalKind::angle: out.push_back(s.angle); break;
      case SignalKind::velocity: out.push_back(s.velocity); break;
      case SignalKind::torque: out.push_back(s.torque); break;
    }
  }
  return out;
}

bool operator==(const StrideSet& a, const StrideSet& b) {
  return a.subject == b.subject && a.task == b.task && a.joint == b.joint && a.strides == b.strides;
}

Dataset::Dataset(std::map<StrideKey, StrideSet> strides, bool mass_normalized)
    : strides_(std::move(strides)), mass_normalized_(mass_normalized) {
  std::set<SubjectId> subjects;
  std::set<Task> tasks;
  for (const auto& [key, set] : strides_) {
    subjects.insert(key.subject);
    tasks.insert(key.task);
  }
  subjects_.assign(subjects.begin(), subjects.end());
  tasks_.assign(tasks.begin(), tasks.end());
}

std::vector<Task> Dataset::walking_tasks() const {
  std::vector<Task> out;
  for (const auto& t : tasks_) {
    if (t != kSitStandTask) out.push_back(t);
  }
  return out;
}

const StrideSet* Dataset::find(const SubjectId& subject, const Task& task, Joint joint) const {
  auto it = strides_.find(StrideKey{subject, task, joint});
  return it == strides_.end() ? nullptr : &it->second;
}

const StrideSet& Dataset::at(const SubjectId& subject, const Task& task, Joint joint) const {
  if (const auto* s = find(subject, task, joint)) return *s;
  throw Error(ErrorCode::NotFound,
              "no strides for subject " + subject + " at " + task.label() + " joint " + std::string(to_string(joint)));
}

std::vector<SubjectId> Dataset::subjects_with(const Task& task, Joint joint) const {
  std::vector<SubjectId> out;
  for (const auto& subject : subjects_) {
    const auto* s = find(subject, task, joint);
    if (s != nullptr && !s->strides.empty()) out.push_back(subject);
  }
  return out;
}

StrideSet Dataset::pooled(const Task& task, Joint joint) const {
  StrideSet out{"*", task, joint, {}};
  for (const auto& subject : subjects_with(task, joint)) {
    const auto& s = at(subject, task, joint);
    out.strides.insert(out.strides.end(), s.strides.begin(), s.strides.end());
  }
  return out;
}

std::size_t Dataset::stride_count() const {
  std::size_t n = 0;
  for (const auto& [key, set] : strides_) n += set.strides.size();
  return n;
}

PhaseSeries differentiate(const PhaseSeries& angle, double duration_s) {
  constexpr double ds = 1.0 / static_cast<double>(kPhasePoints - 1);
  const auto& y = angle.values();
  PhaseSeries::Values d{};
  constexpr std::size_t n = kPhasePoints;
  d[0] = (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * ds);
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (y[i + 1] - y[i - 1]) / (2.0 * ds);
  d[n - 1] = (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * ds);
  for (auto& v : d) v /= duration_s;
  return PhaseSeries(SignalKind::velocity, d);
}

Dataset parse_dataset(std::string_view csv, const LoadOptions& options) {
  if (options.schema_version != kDatasetSchemaVersion) {
    throw Error(ErrorCode::SchemaMismatch, "unsupported schema version " + std::to_string(options.schema_version));
  }
  if (csv.size() >= 3 && csv.substr(0, 3) == "\xEF\xBB\xBF") csv.remove_prefix(3);

  std::size_t pos = 0;
  std::size_t row = 0;
  auto next_line = [&](std::string_view& line) {
    while (pos < csv.size()) {
      const auto nl = csv.find('\n', pos);
      line = csv.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
      pos = nl == std::string_view::npos ? csv.size() : nl + 1;
      ++row;
      if (!trim(line).empty()) return true;
    }
    return false;
  };

  std::string_view line;
  if (!next_line(line)) throw Error(ErrorCode::SchemaMismatch, "empty file: header row is mandatory");
  const auto header = split_row(line);
  if (header.size() != kColumns.size() || !std::equal(header.begin(), header.end(), kColumns.begin())) {
    throw Error(ErrorCode::SchemaMismatch, "header must be exactly the 10 schema columns");
  }

  std::vector<PendingStride> pending;
  std::map<std::tuple<SubjectId, Task, Joint, std::string>, std::size_t> index;

  while (next_line(line)) {
    const auto f = split_row(line);
    if (f.size() != kColumns.size()) {
      throw Error(ErrorCode::SchemaMismatch,
                  "row " + std::to_string(row) + " has " + std::to_string(f.size()) + " fields, expected 10");
    }
    const SubjectId subject(f[0]);
    if (subject.empty()) throw Error(ErrorCode::SchemaMismatch, "row " + std::to_string(row) + ": empty subject");
    const Task task{parse_number(f[1], row, kColumns[1]), parse_number(f[2], row, kColumns[2])};
    Joint joint;
    try {
      joint = joint_from_string(f[3]);
    } catch (const Error&) {
      throw Error(ErrorCode::SchemaMismatch, "row " + std::to_string(row) + ": unknown joint '" + std::string(f[3]) + "'");
    }
    const std::string stride_id(f[4]);

    const auto key = std::make_tuple(subject, task, joint, stride_id);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, pending.size()).first;
      PendingStride p;
      p.key = StrideKey{subject, task, joint};
      p.id = stride_id;
      p.first_row = row;
      pending.push_back(std::move(p));
    }
    auto& p = pending[it->second];

    if (!f[5].empty()) {
      const double duration = parse_number(f[5], row, kColumns[5]);
      if (p.duration && *p.duration != duration) {
        throw Error(ErrorCode::SchemaMismatch, "stride " + subject + "/" + stride_id + ": inconsistent duration");
      }
      p.duration = duration;
    }
    const double phase_index = parse_number(f[6], row, kColumns[6]);
    if (phase_index < 1 || phase_index > static_cast<double>(kPhasePoints) || phase_index != std::floor(phase_index)) {
      throw Error(ErrorCode::SchemaMismatch,
                  "row " + std::to_string(row) + ": phase_index must be an integer in 1..150");
    }
    const auto i = static_cast<std::size_t>(phase_index) - 1;
    if (p.seen[i]) {
      throw Error(ErrorCode::SchemaMismatch,
                  "stride " + subject + "/" + stride_id + ": duplicate phase_index " + std::to_string(i + 1));
    }
    p.seen[i] = true;
    ++p.count;
    p.angle[i] = parse_number(f[7], row, kColumns[7]) * kDegToRad;
    if (f[8].empty()) {
      p.velocity_missing = true;
    } else {
      p.velocity_present = true;
      p.velocity[i] = parse_number(f[8], row, kColumns[8]) * kDegToRad;
    }
    const double torque = parse_number(f[9], row, kColumns[9]);
    if (std::abs(torque) > options.max_abs_torque_nm_kg) {
      throw Error(ErrorCode::SchemaMismatch, "row " + std::to_string(row) + ": torque " + std::to_string(torque) +
                                                 " exceeds the mass-normalized plausibility bound");
    }
    p.torque[i] = torque;
  }

  std::map<StrideKey, StrideSet> sets;
  for (auto& p : pending) {
    const std::string name = p.key.subject + "/" + p.key.task.label() + "/" + std::string(to_string(p.key.joint)) +
                             "/stride " + p.id;
    if (p.count != kPhasePoints) {
      throw Error(ErrorCode::SchemaMismatch,
                  name + " has " + std::to_string(p.count) + " samples, expected " + std::to_string(kPhasePoints));
    }
    if (p.velocity_present && p.velocity_missing) {
      throw Error(ErrorCode::SchemaMismatch, name + ": velocity must be given for all samples or none");
    }
    if (p.duration && !(*p.duration > 0.0)) {
      throw Error(ErrorCode::SchemaMismatch, name + ": stride duration must be positive");
    }
    Stride stride;
    stride.id = p.id;
    stride.duration_s = p.duration;
    stride.angle = PhaseSeries(SignalKind::angle, p.angle);
    stride.torque = PhaseSeries(SignalKind::torque, p.torque);
    if (p.velocity_present) {
      stride.velocity = PhaseSeries(SignalKind::velocity, p.velocity);
    } else {
      if (!p.duration) {
        throw Error(ErrorCode::SchemaMismatch, name + ": velocity absent, stride_duration_s is then mandatory");
      }
      stride.velocity = differentiate(stride.angle, *p.duration);
    }
    auto& set = sets[p.key];
    set.subject = p.key.subject;
    set.task = p.key.task;
    set.joint = p.key.joint;
    set.strides.push_back(std::move(stride));
  }
  return Dataset(std::move(sets), true);
}

Dataset load_dataset(const std::filesystem::path& path, const LoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), options);
}

Dataset load_dataset(const std::filesystem::path& path, int schema_version) {
  LoadOptions options;
  options.schema_version = schema_version;
  return load_dataset(path, options);
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    if (c) out += ',';
    out += kColumns[c];
  }
  out += '\n';
  for (const auto& [key, set] : dataset.strides()) {
    for (const auto& stride : set.strides) {
      for (std::size_t i = 0; i < kPhasePoints; ++i) {
        out += key.subject;
        out += ',';
        append_number(out, key.task.speed);
        out += ',';
        append_number(out, key.task.incline);
        out += ',';
        out += to_string(key.joint);
        out += ',';
        out += stride.id;
        out += ',';
        if (stride.duration_s) append_number(out, *stride.duration_s);
        out += ',';
        out += std::to_string(i + 1);
        out += ',';
        append_number(out, to_degrees_exact(stride.angle[i]));
        out += ',';
        append_number(out, to_degrees_exact(stride.velocity[i]));
        out += ',';
        append_number(out, stride.torque[i]);
        out += '\n';
      }
    }
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + path.string());
  out << serialize_dataset(dataset);
}

PhaseSeries mean_trajectory(std::span<const PhaseSeries> strides) {
  if (strides.empty()) throw Error(ErrorCode::EmptyInput, "mean of zero strides");
  const SignalKind kind = strides.front().kind();
  PhaseSeries::Values acc{};
  for (const auto& s : strides) {
    if (s.kind() != kind) throw Error(ErrorCode::KindMismatch, "mixed signal kinds in mean");
    for (std::size_t i = 0; i < kPhasePoints; ++i) acc[i] += s[i];
  }
  const double n = static_cast<double>(strides.size());
  for (auto& v : acc) v /= n;
  return PhaseSeries(kind, acc);
}

PhaseSeries subject_mean(const Dataset& dataset, const SubjectId& subject, const Task& task, Joint joint,
                         SignalKind kind) {
  const auto series = dataset.at(subject, task, joint).series(kind);
  return mean_trajectory(series);
}

PhaseSeries population_mean(const Dataset& dataset, const Task& task, Joint joint, SignalKind kind) {
  std::vector<PhaseSeries> means;
  for (const auto& subject : dataset.subjects_with(task, joint)) {
    means.push_back(subject_mean(dataset, subject, task, joint, kind));
  }
  if (means.empty()) {
    throw Error(ErrorCode::NotFound, "no data at " + task.label() + " joint " + std::string(to_string(joint)));
  }
  return mean_trajectory(means);
}

PhaseSeries loo_mean(const Dataset& dataset, const SubjectId& exclude_subject, const Task& task, Joint joint,
                     SignalKind kind) {
  std::vector<PhaseSeries> means;
  for (const auto& subject : dataset.subjects_with(task, joint)) {
    if (subject == exclude_subject) continue;
    means.push_back(subject_mean(dataset, subject, task, joint, kind));
  }
  if (means.empty()) {
    throw Error(ErrorCode::InsufficientSubjects, "leave-one-out mean needs at least one other subject at " +
                                                     task.label() + " joint " + std::string(to_string(joint)));
  }
  return mean_trajectory(means);
}

std::pair<StrideSet, StrideSet> split_strides(const StrideSet& strides, std::uint64_t seed) {
  const std::size_t n = strides.strides.size();
  if (n < 2) throw Error(ErrorCode::InsufficientStrides, "splitting needs at least 2 strides");

  // Fisher-Yates over raw mt19937_64 output; std::shuffle is not specified bit-for-bit.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const std::size_t first_size = (n + 1) / 2;
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(first_size));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(first_size), order.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());

  StrideSet first{strides.subject, strides.task, strides.joint, {}};
  StrideSet second{strides.subject, strides.task, strides.joint, {}};
  for (auto i : a) first.strides.push_back(strides.strides[i]);
  for (auto i : b) second.strides.push_back(strides.strides[i]);
  return {std::move(first), std::move(second)};
}

}  // namespace ptune
