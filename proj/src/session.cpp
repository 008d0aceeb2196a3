#include "ptune/session.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <spdlog/spdlog.h>

#include "ptune/error.hpp"
#include "ptune/serialize.hpp"
#include "ptune/simulator.hpp"

namespace ptune::session {

namespace {

constexpr std::string_view kArchiveMagic = "PTUNEBUNDLE";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write to a sibling temp file and rename, so readers never see a partial file.
void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, path);
}

}  // namespace

fs::path storage_root() {
  if (const char* home = std::getenv("PTUNE_HOME"); home && *home) return fs::path(home);
  return fs::path("ptune_home");
}

// ---- profiles

ProfileStore::ProfileStore(fs::path root) : dir_(std::move(root) / "profiles") {}

std::string ProfileStore::id_for(const std::string& name) {
  std::string id;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      id.push_back(static_cast<char>(std::tolower(u)));
    } else if ((c == '-' || c == '_' || c == ' ' || c == '.') && !id.empty() && id.back() != '-') {
      id.push_back('-');
    }
  }
  while (!id.empty() && id.back() == '-') id.pop_back();
  return id.empty() ? "untitled" : id;
}

std::string ProfileStore::save(const TuningProfile& profile) {
  validate(profile.params());
  const std::string id = id_for(profile.name);
  write_file(dir_ / (id + ".json"), io::to_json(profile).dump(2) + "\n");
  return id;
}

std::string ProfileStore::save(const json& profile) {
  try {
    return save(io::profile_from_json(profile));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::OutOfBounds || e.code() == ErrorCode::SchemaMismatch) {
      throw Error(ErrorCode::ValidationFailed, e.what());
    }
    throw;
  }
}

TuningProfile ProfileStore::load(const std::string& id) const {
  const fs::path file = dir_ / (id + ".json");
  if (id.empty() || id != id_for(id) || !fs::exists(file)) throw Error(ErrorCode::NotFound, "no profile '" + id + "'");
  return io::profile_from_json(json::parse(read_file(file)));
}

std::vector<ProfileInfo> ProfileStore::list() const {
  std::vector<ProfileInfo> out;
  if (!fs::exists(dir_)) return out;
  for (const auto& entry : fs::directory_iterator(dir_)) {
    if (entry.path().extension() != ".json") continue;
    const std::string id = entry.path().stem().string();
    try {
      const TuningProfile p = load(id);
      out.push_back({id, p.name, p.version, p.created_at});
    } catch (const std::exception& e) {
      spdlog::warn("profile store: skipping {}: {}", entry.path().string(), e.what());
    }
  }
  std::sort(out.begin(), out.end(), [](const ProfileInfo& a, const ProfileInfo& b) { return a.id < b.id; });
  return out;
}

// ---- session log

json to_json(const LogEntry& e) {
  json vaf = json::object();
  for (const auto& [id, v] : e.vaf) vaf[id] = v;
  return {{"timestamp", e.timestamp},     {"profile", io::to_json(e.profile)}, {"regenerated", e.regenerated},
          {"wall_time_s", e.wall_time_s}, {"vaf", vaf},                        {"hash", e.hash},
          {"note", e.note}};
}

LogEntry log_entry_from_json(const json& j) {
  LogEntry e;
  try {
    e.timestamp = j.at("timestamp").get<std::string>();
    e.profile = io::profile_from_json(j.at("profile"));
    e.regenerated = j.at("regenerated").get<std::vector<std::string>>();
    e.wall_time_s = j.at("wall_time_s").get<double>();
    e.vaf = j.at("vaf").get<std::map<std::string, double>>();
    e.hash = j.value("hash", "");
    e.note = j.value("note", "");
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::SchemaMismatch, std::string("session log entry: ") + ex.what());
  }
  return e;
}

SessionLog::SessionLog(fs::path file) : file_(std::move(file)) {
  if (fs::exists(file_)) {
    const auto all = entries();
    if (!all.empty()) last_timestamp_ = all.back().timestamp;
  }
}

void SessionLog::append(LogEntry entry) {
  if (entry.timestamp.empty()) entry.timestamp = utc_timestamp();
  if (entry.timestamp < last_timestamp_) entry.timestamp = last_timestamp_;
  last_timestamp_ = entry.timestamp;
  if (file_.has_parent_path()) fs::create_directories(file_.parent_path());
  std::ofstream out(file_, std::ios::app);
  if (!out) throw Error(ErrorCode::MissingFile, "cannot append to " + file_.string());
  out << to_json(entry).dump() << '\n';
}

std::vector<LogEntry> SessionLog::entries() const {
  std::vector<LogEntry> out;
  std::ifstream in(file_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::SchemaMismatch, "session log: " + std::string(e.what()));
    }
    out.push_back(log_entry_from_json(j));
  }
  return out;
}

// ---- archive

std::string encode_archive(const ModelBundle& bundle) {
  if (!bundle.dirty.empty()) {
    std::string ids;
    for (const auto& id : bundle.dirty) ids += (ids.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::DirtyBundle, "regeneration pending for " + ids);
  }
  const std::string payload = io::to_json(bundle).dump();
  std::ostringstream out;
  out << kArchiveMagic << ' ' << kArchiveFormatVersion << ' ' << io::sha256_hex(payload) << ' ' << payload.size()
      << '\n'
      << payload;
  return out.str();
}

ModelBundle decode_archive(std::string_view bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string_view::npos) throw Error(ErrorCode::DigestMismatch, "archive header is incomplete");
  std::istringstream header{std::string(bytes.substr(0, eol))};
  std::string magic, digest;
  int version = 0;
  std::size_t size = 0;
  if (!(header >> magic >> version >> digest >> size) || magic != kArchiveMagic) {
    throw Error(ErrorCode::SchemaMismatch, "not a bundle archive");
  }
  if (version != kArchiveFormatVersion) {
    throw Error(ErrorCode::VersionUnsupported, "archive format " + std::to_string(version) + " (supported: " +
                                                   std::to_string(kArchiveFormatVersion) + ")");
  }
  const std::string_view payload = bytes.substr(eol + 1);
  if (payload.size() != size || io::sha256_hex(payload) != digest) {
    throw Error(ErrorCode::DigestMismatch, "archive payload does not match its digest");
  }
  try {
    return io::bundle_from_json(json::parse(payload));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::SchemaMismatch, std::string("archive payload: ") + e.what());
  }
}

ExportResult export_bundle(const ModelBundle& bundle, const fs::path& path) {
  const std::string bytes = encode_archive(bundle);
  write_file(path, bytes);
  const auto eol = bytes.find('\n');
  return {path, io::sha256_hex(std::string_view(bytes).substr(eol + 1)), bytes.size()};
}

ModelBundle import_bundle(const fs::path& path) { return decode_archive(read_file(path)); }

// ---- service

Service::Service(Dataset dataset, ModelBundle baseline, fs::path root, Hooks hooks)
    : dataset_(std::move(dataset)),
      baseline_(std::make_shared<const ModelBundle>(std::move(baseline))),
      root_(std::move(root)),
      hooks_(std::move(hooks)),
      profiles_(root_),
      log_(root_ / "session.jsonl"),
      current_(baseline_) {}

std::shared_ptr<const ModelBundle> Service::current() const {
  std::lock_guard lock(state_mutex_);
  return current_;
}

RegenerateOutcome Service::regenerate(const TuningProfile& profile, const std::string& note) {
  std::unique_lock guard(regen_mutex_, std::try_to_lock);
  if (!guard.owns_lock()) throw Error(ErrorCode::Busy, "regeneration in progress");
  if (hooks_.during_regeneration) hooks_.during_regeneration();

  const auto before = current();
  Regeneration r = ptune::regenerate(*before, profile, dataset_);
  auto next = std::make_shared<const ModelBundle>(std::move(r.bundle));

  RegenerateOutcome out;
  out.regenerated = r.regenerated;
  out.wall_time_s = r.wall_time_s;
  out.vaf = next->vaf_per_joint();
  out.model_vaf = next->model_vaf;
  out.hash = next->hash();
  out.version = next->profile.version;
  {
    std::lock_guard lock(state_mutex_);
    current_ = next;
  }
  {
    std::lock_guard lock(log_mutex_);
    log_.append({utc_timestamp(), next->profile, out.regenerated, out.wall_time_s, out.model_vaf, out.hash, note});
  }
  spdlog::info("regenerated {} model(s) in {:.3f} s, bundle {}", out.regenerated.size(), out.wall_time_s,
               out.hash.substr(0, 12));
  return out;
}

json Service::preview(const Task& task, Joint joint) {
  const auto bundle = current();
  const auto tasks = dataset_.walking_tasks();
  if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) {
    throw Error(ErrorCode::NotFound, "task " + task.label() + " is not in the dataset");
  }
  if (!bundle->walking_impedance.count(joint)) {
    throw Error(ErrorCode::NotFound, "no impedance model for " + std::string(to_string(joint)));
  }
  const std::string key = bundle->hash() + "|" + task.label() + "|" + std::string(to_string(joint));
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = preview_cache_.find(key); it != preview_cache_.end()) return it->second;
  }

  const auto tuned_targets = impedance_targets(dataset_, joint, bundle->profile.params(), bundle->config);
  const auto base_targets = impedance_targets(dataset_, joint, TuningParams{}, baseline_->config);
  const WalkInput input = mean_input(dataset_, task, {joint});
  const ReplayResult tuned = replay_walk(*bundle, input, task);
  const ReplayResult base = replay_walk(*baseline_, input, task);

  const std::size_t end = tuned.swing_begin;
  const auto head = [end](const PhaseSeries& s) {
    return std::vector<double>(s.values().begin(), s.values().begin() + static_cast<std::ptrdiff_t>(end));
  };
  std::vector<double> phase(end);
  for (std::size_t i = 0; i < end; ++i) phase[i] = phase_at(i);

  const auto peak = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  const auto tuned_target = head(tuned_targets.at(task).torque);
  const auto base_target = head(base_targets.at(task).torque);
  const auto tuned_cmd = head(tuned.commanded_torque.at(joint));
  const auto base_cmd = head(base.commanded_torque.at(joint));

  json out = {{"task", {{"speed", task.speed}, {"incline", task.incline}}},
              {"joint", to_string(joint)},
              {"bundle_hash", bundle->hash()},
              {"profile", io::to_json(bundle->profile)},
              {"phase", phase},
              {"tuned_target", tuned_target},
              {"baseline_target", base_target},
              {"tuned_commanded", tuned_cmd},
              {"baseline_commanded", base_cmd},
              {"target_peak_ratio", peak(base_target) > 0.0 ? peak(tuned_target) / peak(base_target) : 1.0},
              {"commanded_peak_ratio", peak(base_cmd) > 0.0 ? peak(tuned_cmd) / peak(base_cmd) : 1.0}};
  std::lock_guard lock(cache_mutex_);
  preview_cache_[key] = out;
  return out;
}

ExportResult Service::export_current(const std::optional<fs::path>& path) {
  const auto bundle = current();
  const fs::path target = path ? *path
                               : root_ / "exports" /
                                     ("bundle-v" + std::to_string(bundle->profile.version) + "-" +
                                      bundle->hash().substr(0, 12) + ".ptb");
  return export_bundle(*bundle, target);
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotFound:
    case ErrorCode::MissingFile:
    case ErrorCode::MissingModel:
      return 404;
    case ErrorCode::Busy:
    case ErrorCode::DirtyBundle:
      return 409;
    case ErrorCode::RegenerationRejected:
      return 422;
    case ErrorCode::ValidationFailed:
    case ErrorCode::OutOfBounds:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::InvalidArgument:
    case ErrorCode::SeparationExceeded:
    case ErrorCode::PhaseOutOfRange:
      return 400;
    default:
      return 500;
  }
}

}  // namespace ptune::session
