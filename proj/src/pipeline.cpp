#include "aoct/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <stdexcept>

#include "aoct/extract.hpp"
#include "aoct/field_io.hpp"
#include "aoct/geometry.hpp"
#include "aoct/io.hpp"
#include "aoct/mesh.hpp"
#include "aoct/metrics.hpp"
#include "aoct/phantom.hpp"
#include "aoct/rng.hpp"

namespace fs = std::filesystem;

namespace aoct {

namespace {

using nlohmann::json;

// Stage seed streams, derived from the global seed.
constexpr uint64_t kSimStream = 0x73696d756c617465ULL;   // "simulate"
constexpr uint64_t kCorruptStream = 0x636f727275707400ULL;  // "corrupt"
constexpr uint64_t kFitStream = 0x6669740000000000ULL;   // "fit"
constexpr uint64_t kEmdStream = 0x656d640000000000ULL;   // "emd"

std::string iso_utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string frame_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06d.pgm", index);
  return buf;
}

// Stage context: resolved paths plus digest recording.
struct Ctx {
  const PipelineConfig& cfg;
  fs::path out;
  StageRecord rec;

  fs::path p(const std::string& rel) const { return out / rel; }
  void note_input(const fs::path& path) {
    rec.inputs[fs::relative(path, out).string()] = sha256_file(path.string());
  }
  void note_output(const fs::path& path) {
    rec.outputs[fs::relative(path, out).string()] = sha256_file(path.string());
  }
  void warn(const std::string& msg) { rec.warnings.push_back(msg); }

  void require(const std::string& rel, const std::string& producer) const {
    if (!fs::exists(p(rel)))
      throw std::runtime_error(rec.name + ": missing dependency '" + rel + "'; run the " +
                               producer + " stage first");
  }
};

std::vector<fs::path> sorted_pgms(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".pgm")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

fs::path resolve_input_dir(const Ctx& ctx) {
  if (!ctx.cfg.mask_dir.empty()) return ctx.cfg.mask_dir;
  return ctx.p(ctx.cfg.source == "intensity" ? "frames" : "masks");
}

void stage_simulate(Ctx& ctx) {
  if (!ctx.cfg.has_phantom)
    throw std::runtime_error("simulate: the config has no [phantom] section");
  const GroundTruthScan scan = simulate_scan(ctx.cfg.phantom, ctx.cfg.scan, ctx.cfg.noise,
                                             derive_seed(ctx.cfg.seed, kSimStream));
  fs::create_directories(ctx.p("masks"));
  fs::create_directories(ctx.p("frames"));
  for (int f = 0; f < ctx.cfg.scan.n_frames; ++f) {
    const fs::path mask_path = ctx.p("masks") / frame_name(f);
    const fs::path frame_path = ctx.p("frames") / frame_name(f);
    write_mask_pgm(mask_path.string(), scan.masks[f]);
    write_frame_pgm(frame_path.string(), scan.frames[f]);
    ctx.note_output(mask_path);
    ctx.note_output(frame_path);
  }
  write_boundaries_csv(ctx.p("gt_boundaries.csv").string(), scan.boundaries, ctx.cfg.scan);
  ctx.note_output(ctx.p("gt_boundaries.csv"));
}

void stage_extract(Ctx& ctx) {
  const fs::path dir = resolve_input_dir(ctx);
  if (!fs::exists(dir))
    throw std::runtime_error("extract: input directory '" + dir.string() +
                             "' does not exist; run the simulate stage first or set "
                             "extract.mask_dir");
  const std::vector<fs::path> files = sorted_pgms(dir);
  if (static_cast<int>(files.size()) != ctx.cfg.scan.n_frames)
    throw std::runtime_error("extract: found " + std::to_string(files.size()) + " frames in '" +
                             dir.string() + "' but scan.n_frames = " +
                             std::to_string(ctx.cfg.scan.n_frames));

  std::vector<ALineBoundary> boundaries(files.size());
  long low_conf = 0, absent = 0, degenerate = 0;
  for (size_t f = 0; f < files.size(); ++f) {
    ctx.note_input(files[f]);
    if (ctx.cfg.source == "intensity") {
      PolarFrame frame = read_frame_pgm(files[f].string(), static_cast<int>(f));
      frame = normalize_intensity(frame);
      degenerate += frame.degenerate;
      boundaries[f] = boundary_from_intensity(frame, ctx.cfg.scan, ctx.cfg.intensity_params);
    } else {
      const SegmentationMask mask = read_mask_pgm(files[f].string(), static_cast<int>(f));
      boundaries[f] = boundary_from_mask(mask, ctx.cfg.scan, ctx.cfg.mask_params);
    }
    for (const auto& e : boundaries[f].columns) {
      low_conf += e.low_confidence;
      absent += !e.d_tiss.has_value();
    }
  }
  if (degenerate > 0) ctx.warn(std::to_string(degenerate) + " degenerate (constant) frames");
  if (low_conf > 0) ctx.warn(std::to_string(low_conf) + " low-confidence columns");
  if (absent > 0) ctx.warn(std::to_string(absent) + " columns without a wall");

  if (ctx.cfg.jitter_sigma_px > 0.0 || ctx.cfg.dropout_rate > 0.0) {
    boundaries = jitter_boundaries(boundaries, ctx.cfg.scan, ctx.cfg.jitter_sigma_px,
                                   ctx.cfg.dropout_rate, derive_seed(ctx.cfg.seed, kCorruptStream));
    ctx.warn("boundaries corrupted: jitter " + format_double(ctx.cfg.jitter_sigma_px) +
             " px, dropout " + format_double(ctx.cfg.dropout_rate));
  }

  write_boundaries_csv(ctx.p("boundaries.csv").string(), boundaries, ctx.cfg.scan);
  const PointCloud cloud = pointcloud_from_scan(boundaries, ctx.cfg.scan);
  write_cloud_ply(ctx.p("cloud.ply").string(), cloud);
  write_cloud_xyz(ctx.p("cloud.xyz").string(), cloud);
  ctx.note_output(ctx.p("boundaries.csv"));
  ctx.note_output(ctx.p("cloud.ply"));
  ctx.note_output(ctx.p("cloud.xyz"));
}

void stage_fit(Ctx& ctx) {
  ctx.require("cloud.ply", "extract");
  ctx.note_input(ctx.p("cloud.ply"));
  const PointCloud cloud = read_cloud_ply(ctx.p("cloud.ply").string());
  auto [unit_cloud, transform] = normalize_pointcloud(cloud);

  TrainConfig tc = ctx.cfg.train;
  tc.seed = derive_seed(ctx.cfg.seed, kFitStream);
  TrainResult result;
  const MlpSdf model = train(unit_cloud.points, transform, tc, &result);
  if (result.diverged)
    ctx.warn("training diverged at step " + std::to_string(result.divergence_step) +
             "; kept the last finite parameters");
  if (result.total_skipped > 0)
    ctx.warn(std::to_string(result.total_skipped) + " degenerate-gradient samples skipped");

  save_model(ctx.p("model.bin").string(), model);
  write_train_log_csv(ctx.p("train_log.csv").string(), result.log);
  ctx.note_output(ctx.p("model.bin"));
  ctx.note_output(ctx.p("train_log.csv"));
}

std::pair<double, double> scanned_z_interval(const ScanConfig& cfg) {
  const double z_lo = std::min(cfg.z_start, cfg.z_end());
  const double z_hi = std::max(cfg.z_start, cfg.z_end());
  const double c = std::cos(cfg.phi_cath);
  // surface z = z_cath - d*cos(phi), d in (0, d_max]
  return {z_lo - std::max(c, 0.0) * cfg.d_max, z_hi - std::min(c, 0.0) * cfg.d_max};
}

void stage_mesh(Ctx& ctx) {
  ctx.require("model.bin", "fit");
  ctx.note_input(ctx.p("model.bin"));
  const MlpSdf model = load_model(ctx.p("model.bin").string());

  std::optional<std::pair<double, double>> crop;
  if (ctx.cfg.z_crop) crop = scanned_z_interval(ctx.cfg.scan);
  const TriangleMesh mesh = extract_mesh(model, ctx.cfg.grid, crop);

  write_mesh_obj(ctx.p("mesh.obj").string(), mesh);
  write_mesh_ply(ctx.p("mesh.ply").string(), mesh);
  ctx.note_output(ctx.p("mesh.obj"));
  ctx.note_output(ctx.p("mesh.ply"));
}

void stage_resample(Ctx& ctx) {
  ctx.require("model.bin", "fit");
  ctx.note_input(ctx.p("model.bin"));
  const MlpSdf model = load_model(ctx.p("model.bin").string());
  const std::vector<ALineBoundary> resampled = resample_boundaries(model, ctx.cfg.scan);

  long misses = 0;
  for (const auto& b : resampled)
    for (const auto& e : b.columns) misses += !e.d_tiss.has_value();
  if (misses > 0) ctx.warn(std::to_string(misses) + " rays missed the surface within d_max");

  write_boundaries_csv(ctx.p("resampled.csv").string(), resampled, ctx.cfg.scan);
  ctx.note_output(ctx.p("resampled.csv"));
}

json aline_json(const ALineErrorReport& r) {
  return {{"mu_dist_mm", r.mu_dist_mm},
          {"mu_dist_std_mm", r.mu_dist_std_mm},
          {"max_dist_mm", r.max_dist_mm},
          {"max_dist_std_mm", r.max_dist_std_mm},
          {"global_max_mm", r.global_max_mm},
          {"joint_columns", r.total_joint},
          {"gt_only_columns", r.total_gt_only},
          {"pred_only_columns", r.total_pred_only}};
}

void stage_metrics(Ctx& ctx) {
  ctx.require("gt_boundaries.csv", "simulate");
  ctx.require("boundaries.csv", "extract");
  ctx.require("resampled.csv", "resample");
  ctx.require("cloud.ply", "extract");
  ctx.require("mesh.ply", "mesh");
  ctx.require("model.bin", "fit");
  for (const char* rel : {"gt_boundaries.csv", "boundaries.csv", "resampled.csv", "cloud.ply",
                          "mesh.ply", "model.bin"})
    ctx.note_input(ctx.p(rel));

  const auto gt = read_boundaries_csv(ctx.p("gt_boundaries.csv").string());
  const auto extracted = read_boundaries_csv(ctx.p("boundaries.csv").string());
  const auto resampled = read_boundaries_csv(ctx.p("resampled.csv").string());
  const PointCloud cloud = read_cloud_ply(ctx.p("cloud.ply").string());
  const TriangleMesh mesh = read_mesh_ply(ctx.p("mesh.ply").string());
  const MlpSdf model = load_model(ctx.p("model.bin").string());

  const ALineErrorReport ar_extract = aline_errors(gt, extracted);
  const ALineErrorReport ar_resampled = aline_errors(gt, resampled);

  // DICE of rasterized boundaries against the ground-truth masks.
  const fs::path mask_dir = ctx.cfg.mask_dir.empty() ? ctx.p("masks") : fs::path(ctx.cfg.mask_dir);
  std::vector<double> dice_extract, dice_resampled;
  const bool have_masks = fs::exists(mask_dir);
  if (have_masks) {
    const auto files = sorted_pgms(mask_dir);
    if (static_cast<int>(files.size()) == ctx.cfg.scan.n_frames) {
      for (size_t f = 0; f < files.size(); ++f) {
        const SegmentationMask gt_mask = read_mask_pgm(files[f].string(), static_cast<int>(f));
        dice_extract.push_back(dice(gt_mask, rasterize_mask(extracted[f], ctx.cfg.scan)));
        dice_resampled.push_back(dice(gt_mask, rasterize_mask(resampled[f], ctx.cfg.scan)));
      }
    } else {
      ctx.warn("dice skipped: mask count does not match scan.n_frames");
    }
  } else {
    ctx.warn("dice skipped: no mask directory");
  }
  auto mean_std = [](const std::vector<double>& v) -> std::pair<double, double> {
    if (v.empty()) return {0.0, 0.0};
    double s = 0, ss = 0;
    for (double x : v) s += x, ss += x * x;
    const double m = s / double(v.size());
    return {m, std::sqrt(std::max(0.0, ss / double(v.size()) - m * m))};
  };

  // Point-set distances between the GT cloud and the resampled cloud.
  const PointCloud gt_cloud = pointcloud_from_scan(gt, ctx.cfg.scan);
  const PointCloud pred_cloud = pointcloud_from_scan(resampled, ctx.cfg.scan);
  const double cd_mm = chamfer(gt_cloud.points, pred_cloud.points);
  const double hd_mm = hausdorff(gt_cloud.points, pred_cloud.points);
  const double emd_mm =
      emd(gt_cloud.points, pred_cloud.points, derive_seed(ctx.cfg.seed, kEmdStream),
          ctx.cfg.emd_cap);
  const double scale = model.transform.scale;

  const PointMeshReport p2m = point_to_mesh(cloud, mesh);

  // Smoothing evidence: per-frame total variation, raw teacher vs resampled.
  int tv_lower = 0, tv_frames = 0;
  std::vector<double> tv_extract(extracted.size(), 0.0), tv_resampled(extracted.size(), 0.0);
  for (size_t f = 0; f < extracted.size(); ++f) {
    tv_extract[f] = joint_total_variation(extracted[f], resampled[f]);
    tv_resampled[f] = joint_total_variation(resampled[f], extracted[f]);
    if (tv_extract[f] > 0 || tv_resampled[f] > 0) {
      ++tv_frames;
      tv_lower += tv_resampled[f] < tv_extract[f];
    }
  }

  json rep;
  rep["schema"] = "aoct-metrics v1";
  rep["tool_version"] = kToolVersion;
  rep["provenance"] = {{"config_sha256",
                        [&] {
                          json snap = config_to_json(ctx.cfg);
                          snap["out_dir"] = "";  // hash the run, not its location
                          const std::string text = snap.dump();
                          return sha256_bytes(text.data(), text.size());
                        }()},
                       {"inputs", ctx.rec.inputs}};
  rep["conventions"] = {
      {"chamfer", "symmetric mean of squared nearest-neighbor distances"},
      {"hausdorff", "unsquared max-min"},
      {"emd", "mean Euclidean cost of the exact assignment on seeded subsamples, cap " +
                  std::to_string(ctx.cfg.emd_cap)},
      {"aline", "per-frame mean/max over jointly present columns, aggregated mean +/- "
                "population std over frames"},
      {"percentiles", "nearest-rank"}};
  rep["aline_extract"] = aline_json(ar_extract);
  rep["aline_resampled"] = aline_json(ar_resampled);
  if (!dice_extract.empty()) {
    const auto [de, dse] = mean_std(dice_extract);
    const auto [dr, dsr] = mean_std(dice_resampled);
    rep["dice"] = {{"extract_mean", de},
                   {"extract_std", dse},
                   {"resampled_mean", dr},
                   {"resampled_std", dsr}};
  }
  rep["cloud"] = {{"cd_mm2", cd_mm},
                  {"hd_mm", hd_mm},
                  {"emd_mm", emd_mm},
                  {"cd_unit2", cd_mm / (scale * scale)},
                  {"hd_unit", hd_mm / scale},
                  {"emd_unit", emd_mm / scale},
                  {"gt_points", gt_cloud.size()},
                  {"pred_points", pred_cloud.size()},
                  {"unit_scale_mm", scale}};
  rep["point_to_mesh_mm"] = {{"mean", p2m.mean_mm}, {"max", p2m.max_mm}, {"p50", p2m.p50_mm},
                             {"p90", p2m.p90_mm},   {"p95", p2m.p95_mm}, {"p99", p2m.p99_mm}};
  rep["smoothing"] = {{"frames_with_signal", tv_frames},
                      {"frames_resampled_lower_tv", tv_lower},
                      {"fraction", tv_frames > 0 ? double(tv_lower) / tv_frames : 0.0}};
  write_text_file(ctx.p("metrics.json").string(), rep.dump(2) + "\n");

  std::string csv = "# aoct-metrics-frames v1\n";
  csv += "frame,joint,gt_only,pred_only,mu_extract_mm,max_extract_mm,mu_resampled_mm,"
         "max_resampled_mm,dice_extract,dice_resampled,tv_extract_mm,tv_resampled_mm\n";
  for (size_t f = 0; f < extracted.size(); ++f) {
    const auto& re = ar_extract.frames[f];
    const auto& rr = ar_resampled.frames[f];
    csv += std::to_string(re.frame_index) + ',' + std::to_string(re.joint) + ',' +
           std::to_string(re.gt_only) + ',' + std::to_string(re.pred_only) + ',' +
           format_double(re.mu_mm) + ',' + format_double(re.max_mm) + ',' +
           format_double(rr.mu_mm) + ',' + format_double(rr.max_mm) + ',' +
           (f < dice_extract.size() ? format_double(dice_extract[f]) : "") + ',' +
           (f < dice_resampled.size() ? format_double(dice_resampled[f]) : "") + ',' +
           format_double(tv_extract[f]) + ',' + format_double(tv_resampled[f]) + '\n';
  }
  write_text_file(ctx.p("metrics_frames.csv").string(), csv);
  ctx.note_output(ctx.p("metrics.json"));
  ctx.note_output(ctx.p("metrics_frames.csv"));
}

}  // namespace

json RunManifest::to_json() const {
  json j;
  j["tool_version"] = tool_version;
  j["config"] = config;
  j["stages"] = json::object();
  for (const auto& [name, rec] : stages) {
    j["stages"][name] = {{"wall_seconds", rec.wall_seconds},
                         {"completed_utc", rec.completed_utc},
                         {"inputs", rec.inputs},
                         {"outputs", rec.outputs},
                         {"warnings", rec.warnings}};
  }
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.tool_version = j.value("tool_version", std::string(kToolVersion));
  m.config = j.value("config", json::object());
  if (j.contains("stages")) {
    for (const auto& [name, sj] : j.at("stages").items()) {
      StageRecord rec;
      rec.name = name;
      rec.wall_seconds = sj.value("wall_seconds", 0.0);
      rec.completed_utc = sj.value("completed_utc", std::string());
      if (sj.contains("inputs"))
        rec.inputs = sj.at("inputs").get<std::map<std::string, std::string>>();
      if (sj.contains("outputs"))
        rec.outputs = sj.at("outputs").get<std::map<std::string, std::string>>();
      if (sj.contains("warnings")) rec.warnings = sj.at("warnings").get<std::vector<std::string>>();
      m.stages[name] = rec;
    }
  }
  return m;
}

DirLock::DirLock(const std::string& dir) {
  fs::create_directories(dir);
  path_ = (fs::path(dir) / ".lock").string();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw std::runtime_error("output directory '" + dir +
                             "' is locked by another run (remove " + path_ +
                             " if that run crashed)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] const ssize_t n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

DirLock::~DirLock() { ::unlink(path_.c_str()); }

RunManifest run_stages(const std::vector<std::string>& names, const PipelineConfig& cfg) {
  const std::vector<std::string> diags = validate_config(cfg);
  if (!diags.empty()) {
    std::string msg = "invalid config:";
    for (const std::string& d : diags) msg += "\n  - " + d;
    throw std::runtime_error(msg);
  }

  DirLock lock(cfg.out_dir);
  const fs::path manifest_path = fs::path(cfg.out_dir) / "manifest.json";
  RunManifest manifest;
  if (fs::exists(manifest_path))
    manifest = RunManifest::from_json(json::parse(read_text_file(manifest_path.string())));
  manifest.tool_version = kToolVersion;
  manifest.config = config_to_json(cfg);

  for (const std::string& name : names) {
    Ctx ctx{cfg, fs::path(cfg.out_dir), {}};
    ctx.rec.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    if (name == "simulate") {
      stage_simulate(ctx);
    } else if (name == "extract") {
      stage_extract(ctx);
    } else if (name == "fit") {
      stage_fit(ctx);
    } else if (name == "mesh") {
      stage_mesh(ctx);
    } else if (name == "resample") {
      stage_resample(ctx);
    } else if (name == "metrics") {
      stage_metrics(ctx);
    } else {
      throw std::runtime_error("unknown stage '" + name + "'");
    }
    ctx.rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ctx.rec.completed_utc = iso_utc_now();
    manifest.stages[name] = ctx.rec;
    write_text_file(manifest_path.string(), manifest.to_json().dump(2) + "\n");
  }
  return manifest;
}

}  // namespace aoct
