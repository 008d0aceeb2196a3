#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ptune/error.hpp"
#include "ptune/gait_data.hpp"
#include "ptune/tuning.hpp"

namespace ptune::session {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// $PTUNE_HOME, or ./ptune_home when unset.
fs::path storage_root();

struct ProfileInfo {
  std::string id;
  std::string name;
  int version = 0;
  std::string created_at;
};

/// Profiles as <root>/profiles/<id>.json. The id is derived from the profile name.
class ProfileStore {
 public:
  explicit ProfileStore(fs::path root);

  std::string save(const TuningProfile& profile);
  /// Throws ValidationFailed for out-of-bounds or malformed parameters.
  std::string save(const json& profile);
  /// Throws NotFound.
  TuningProfile load(const std::string& id) const;
  std::vector<ProfileInfo> list() const;

  static std::string id_for(const std::string& name);

 private:
  fs::path dir_;
};

struct LogEntry {
  std::string timestamp;
  TuningProfile profile;
  std::vector<std::string> regenerated;
  double wall_time_s = 0.0;
  std::map<std::string, double> vaf;
  std::string hash;
  std::string note;
};

json to_json(const LogEntry& entry);
LogEntry log_entry_from_json(const json& j);

/// Append-only JSON-lines file. Timestamps never go backwards: an entry stamped earlier than the
/// last one is restamped with the last timestamp.
class SessionLog {
 public:
  explicit SessionLog(fs::path file);

  void append(LogEntry entry);
  std::vector<LogEntry> entries() const;
  const fs::path& path() const noexcept { return file_; }

 private:
  fs::path file_;
  std::string last_timestamp_;
};

inline constexpr int kArchiveFormatVersion = 1;

/// "PTUNEBUNDLE <version> <sha256> <bytes>\n" followed by the canonical JSON payload.
std::string encode_archive(const ModelBundle& bundle);
/// Throws DigestMismatch (truncated or altered), VersionUnsupported, SchemaMismatch.
ModelBundle decode_archive(std::string_view bytes);

struct ExportResult {
  fs::path path;
  std::string digest;  // SHA-256 of the payload
  std::size_t bytes = 0;
};

/// Throws DirtyBundle when regeneration is pending.
ExportResult export_bundle(const ModelBundle& bundle, const fs::path& path);
ModelBundle import_bundle(const fs::path& path);

struct RegenerateOutcome {
  std::vector<std::string> regenerated;
  double wall_time_s = 0.0;
  std::map<Joint, double> vaf;
  std::map<std::string, double> model_vaf;
  std::string hash;
  int version = 0;
};

/// Holds the current bundle and serializes regeneration. Readers get immutable snapshots.
class Service {
 public:
  struct Hooks {
    /// Runs inside the regeneration critical section (tests use it to hold the lock).
    std::function<void()> during_regeneration;
  };

  Service(Dataset dataset, ModelBundle baseline, fs::path root, Hooks hooks = {});

  std::shared_ptr<const ModelBundle> current() const;
  const ModelBundle& baseline() const noexcept { return *baseline_; }
  const Dataset& dataset() const noexcept { return dataset_; }

  /// Throws Busy when another regeneration is in flight, RegenerationRejected on a VAF floor.
  RegenerateOutcome regenerate(const TuningProfile& profile, const std::string& note = {});

  /// Tuned vs baseline stance targets and commanded torques at a fitted task. Throws NotFound.
  json preview(const Task& task, Joint joint);

  ExportResult export_current(const std::optional<fs::path>& path = std::nullopt);

  ProfileStore& profiles() noexcept { return profiles_; }
  SessionLog& log() noexcept { return log_; }

 private:
  Dataset dataset_;
  std::shared_ptr<const ModelBundle> baseline_;
  fs::path root_;
  Hooks hooks_;
  ProfileStore profiles_;
  SessionLog log_;

  mutable std::mutex state_mutex_;
  std::shared_ptr<const ModelBundle> current_;
  std::mutex regen_mutex_;
  std::mutex log_mutex_;

  std::mutex cache_mutex_;
  std::map<std::string, json> preview_cache_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

/// JSON HTTP API over a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Blocks until stop().
  bool listen(const std::string& host, int port);
  /// Binds an ephemeral port and returns it; call listen_after_bind() next.
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ptune::session
