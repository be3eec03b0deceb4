#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aoct/config.hpp"

namespace aoct {

/// One completed stage in the manifest. Paths are relative to out_dir.
struct StageRecord {
  std::string name;
  double wall_seconds = 0.0;
  std::string completed_utc;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::vector<std::string> warnings;
};

/// out_dir/manifest.json: tool version, config snapshot, per-stage records.
/// The snapshot re-runs the pipeline identically (aoct pipeline --config
/// manifest.json); timestamps live only here, never in data files.
struct RunManifest {
  std::string tool_version = kToolVersion;
  nlohmann::json config;
  std::map<std::string, StageRecord> stages;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// Exclusive ownership of an output directory via out_dir/.lock (O_EXCL).
/// Throws std::runtime_error when the lock is already held; a stale lock
/// after a crash must be removed by hand (the file records the pid).
class DirLock {
 public:
  explicit DirLock(const std::string& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
};

/// Runs the named stages in order under one directory lock, updating
/// out_dir/manifest.json after each. Stage names: simulate, extract, fit,
/// mesh, resample, metrics. Throws on the first failing stage; a missing
/// dependency names the stage that produces it.
RunManifest run_stages(const std::vector<std::string>& names, const PipelineConfig& cfg);

}  // namespace aoct
