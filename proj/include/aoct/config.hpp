#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aoct/extract.hpp"
#include "aoct/field.hpp"
#include "aoct/mesh.hpp"
#include "aoct/phantom.hpp"
#include "aoct/types.hpp"

namespace aoct {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything a pipeline run needs. Loaded from TOML (hand-edited) or JSON
/// (manifest snapshots); both map to the same keys.
struct PipelineConfig {
  std::string out_dir = "out";
  uint64_t seed = 0;

  ScanConfig scan;

  bool has_phantom = false;  // [phantom] present; required by the simulate stage
  Phantom phantom;
  NoiseParams noise;

  // extract
  std::string source = "mask";  // "mask" | "intensity"
  std::string mask_dir;         // default: <out_dir>/masks (or /frames for intensity)
  MaskBoundaryParams mask_params;
  IntensityBoundaryParams intensity_params;

  // optional boundary corruption between extract and fit (test bed)
  double jitter_sigma_px = 0.0;
  double dropout_rate = 0.0;

  TrainConfig train;

  // mesh
  GridSpec grid;
  bool z_crop = true;  // crop the mesh to the scanned z interval

  // metrics
  size_t emd_cap = 256;

  std::vector<std::string> stages = {"simulate", "extract", "fit",
                                     "mesh",     "resample", "metrics"};
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& cfg);

/// Dispatches on extension: .toml or .json.
PipelineConfig load_config(const std::string& path);

/// Collects every violated invariant as a human-readable diagnostic;
/// empty list iff the config is runnable.
std::vector<std::string> validate_config(const PipelineConfig& cfg);

}  // namespace aoct
