#include "aoct/config.hpp"

#include <stdexcept>

#include "aoct/io.hpp"
#include "aoct/toml.hpp"

namespace aoct {

namespace {

using nlohmann::json;

// Reads j[key] when present, keeping the default otherwise. json::value
// would also accept nulls; being explicit keeps error messages typed.
template <typename T>
void opt(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error(std::string("config: bad value for '") + key + "'");
  }
}

}  // namespace

PipelineConfig config_from_json(const json& j) {
  PipelineConfig cfg;
  opt(j, "out_dir", cfg.out_dir);
  opt(j, "seed", cfg.seed);
  opt(j, "stages", cfg.stages);

  if (j.contains("scan")) {
    const json& s = j.at("scan");
    opt(s, "v_cath", cfg.scan.v_cath);
    opt(s, "omega", cfg.scan.omega);
    opt(s, "phi_cath", cfg.scan.phi_cath);
    opt(s, "f_samp", cfg.scan.f_samp);
    opt(s, "n_columns", cfg.scan.n_columns);
    opt(s, "n_frames", cfg.scan.n_frames);
    opt(s, "d_max", cfg.scan.d_max);
    opt(s, "frame_height", cfg.scan.frame_height);
    opt(s, "z_start", cfg.scan.z_start);
    opt(s, "pullback_sign", cfg.scan.pullback_sign);
    opt(s, "theta_offset", cfg.scan.theta_offset);
  }

  if (j.contains("phantom")) {
    cfg.has_phantom = true;
    const json& p = j.at("phantom");
    opt(p, "base_radius", cfg.phantom.base_radius);
    opt(p, "length", cfg.phantom.length);
    opt(p, "ellipticity", cfg.phantom.ellipticity);
    opt(p, "ellipse_angle", cfg.phantom.ellipse_angle);
    opt(p, "offset_x", cfg.phantom.offset_x);
    opt(p, "offset_y", cfg.phantom.offset_y);
    opt(p, "capped", cfg.phantom.capped);
    if (p.contains("stenoses")) {
      for (const json& s : p.at("stenoses")) {
        Stenosis st;
        opt(s, "z0", st.z0);
        opt(s, "depth", st.depth);
        opt(s, "width", st.width);
        cfg.phantom.stenoses.push_back(st);
      }
    }
  }

  if (j.contains("noise")) {
    const json& n = j.at("noise");
    opt(n, "enabled", cfg.noise.enabled);
    opt(n, "speckle_sigma", cfg.noise.speckle_sigma);
    opt(n, "noise_floor", cfg.noise.noise_floor);
    opt(n, "band_thickness", cfg.noise.band_thickness);
    opt(n, "decay_length", cfg.noise.decay_length);
  }

  if (j.contains("extract")) {
    const json& e = j.at("extract");
    opt(e, "source", cfg.source);
    opt(e, "mask_dir", cfg.mask_dir);
    opt(e, "max_start_row", cfg.mask_params.max_start_row);
    opt(e, "gap_tolerance", cfg.mask_params.gap_tolerance);
    opt(e, "threshold", cfg.intensity_params.threshold);
    opt(e, "min_run", cfg.intensity_params.min_run);
    opt(e, "median_width", cfg.intensity_params.median_width);
  }

  if (j.contains("corrupt")) {
    const json& c = j.at("corrupt");
    opt(c, "jitter_sigma_px", cfg.jitter_sigma_px);
    opt(c, "dropout_rate", cfg.dropout_rate);
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    opt(t, "steps", cfg.train.steps);
    opt(t, "batch_size", cfg.train.batch_size);
    opt(t, "lr", cfg.train.lr);
    opt(t, "queries_per_point", cfg.train.queries_per_point);
    opt(t, "knn_rank", cfg.train.knn_rank);
    opt(t, "eps_grad", cfg.train.eps_grad);
    opt(t, "use_f64", cfg.train.use_f64);
    opt(t, "log_every", cfg.train.log_every);
    if (t.contains("arch")) {
      const json& a = t.at("arch");
      opt(a, "hidden_width", cfg.train.arch.hidden_width);
      opt(a, "hidden_layers", cfg.train.arch.hidden_layers);
      opt(a, "skip_layer", cfg.train.arch.skip_layer);
      opt(a, "softplus_beta", cfg.train.arch.softplus_beta);
    }
  }

  if (j.contains("mesh")) {
    const json& m = j.at("mesh");
    int res = 0;
    opt(m, "resolution", res);
    if (res > 0) cfg.grid.nx = cfg.grid.ny = cfg.grid.nz = res;
    opt(m, "nx", cfg.grid.nx);
    opt(m, "ny", cfg.grid.ny);
    opt(m, "nz", cfg.grid.nz);
    opt(m, "z_crop", cfg.z_crop);
  }

  if (j.contains("metrics")) {
    opt(j.at("metrics"), "emd_cap", cfg.emd_cap);
  }
  return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["out_dir"] = cfg.out_dir;
  j["seed"] = cfg.seed;
  j["stages"] = cfg.stages;
  j["scan"] = {{"v_cath", cfg.scan.v_cath},
               {"omega", cfg.scan.omega},
               {"phi_cath", cfg.scan.phi_cath},
               {"f_samp", cfg.scan.f_samp},
               {"n_columns", cfg.scan.n_columns},
               {"n_frames", cfg.scan.n_frames},
               {"d_max", cfg.scan.d_max},
               {"frame_height", cfg.scan.frame_height},
               {"z_start", cfg.scan.z_start},
               {"pullback_sign", cfg.scan.pullback_sign},
               {"theta_offset", cfg.scan.theta_offset}};
  if (cfg.has_phantom) {
    json p = {{"base_radius", cfg.phantom.base_radius},
              {"length", cfg.phantom.length},
              {"ellipticity", cfg.phantom.ellipticity},
              {"ellipse_angle", cfg.phantom.ellipse_angle},
              {"offset_x", cfg.phantom.offset_x},
              {"offset_y", cfg.phantom.offset_y},
              {"capped", cfg.phantom.capped}};
    p["stenoses"] = json::array();
    for (const Stenosis& s : cfg.phantom.stenoses)
      p["stenoses"].push_back({{"z0", s.z0}, {"depth", s.depth}, {"width", s.width}});
    j["phantom"] = p;
  }
  j["noise"] = {{"enabled", cfg.noise.enabled},
                {"speckle_sigma", cfg.noise.speckle_sigma},
                {"noise_floor", cfg.noise.noise_floor},
                {"band_thickness", cfg.noise.band_thickness},
                {"decay_length", cfg.noise.decay_length}};
  j["extract"] = {{"source", cfg.source},
                  {"mask_dir", cfg.mask_dir},
                  {"max_start_row", cfg.mask_params.max_start_row},
                  {"gap_tolerance", cfg.mask_params.gap_tolerance},
                  {"threshold", cfg.intensity_params.threshold},
                  {"min_run", cfg.intensity_params.min_run},
                  {"median_width", cfg.intensity_params.median_width}};
  j["corrupt"] = {{"jitter_sigma_px", cfg.jitter_sigma_px}, {"dropout_rate", cfg.dropout_rate}};
  j["train"] = {{"steps", cfg.train.steps},
                {"batch_size", cfg.train.batch_size},
                {"lr", cfg.train.lr},
                {"queries_per_point", cfg.train.queries_per_point},
                {"knn_rank", cfg.train.knn_rank},
                {"eps_grad", cfg.train.eps_grad},
                {"use_f64", cfg.train.use_f64},
                {"log_every", cfg.train.log_every},
                {"arch",
                 {{"hidden_width", cfg.train.arch.hidden_width},
                  {"hidden_layers", cfg.train.arch.hidden_layers},
                  {"skip_layer", cfg.train.arch.skip_layer},
                  {"softplus_beta", cfg.train.arch.softplus_beta}}}};
  j["mesh"] = {{"nx", cfg.grid.nx}, {"ny", cfg.grid.ny}, {"nz", cfg.grid.nz},
               {"z_crop", cfg.z_crop}};
  j["metrics"] = {{"emd_cap", cfg.emd_cap}};
  return j;
}

PipelineConfig load_config(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
  if (ext == ".toml") return config_from_json(parse_toml_file(path));
  if (ext == ".json") {
    json j = json::parse(read_text_file(path));
    // accept both bare configs and full manifests
    if (j.contains("config")) j = j.at("config");
    return config_from_json(j);
  }
  throw std::runtime_error("config: unsupported extension '" + ext + "' (use .toml or .json)");
}

std::vector<std::string> validate_config(const PipelineConfig& cfg) {
  std::vector<std::string> diags;
  auto check = [&diags](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      diags.push_back(std::string(what) + ": " + e.what());
    }
  };

  check("scan", [&] { cfg.scan.validate(); });
  check("train", [&] { cfg.train.validate(); });
  check("mesh", [&] { cfg.grid.validate(); });
  if (cfg.has_phantom) {
    check("phantom", [&] { cfg.phantom.validate(); });
    if (diags.empty()) {
      const std::string cov = coverage_diagnostic(cfg.phantom, cfg.scan);
      if (!cov.empty()) diags.push_back("coverage: " + cov);
    }
  }
  if (cfg.source != "mask" && cfg.source != "intensity")
    diags.push_back("extract: source must be \"mask\" or \"intensity\", got \"" + cfg.source +
                    "\"");
  if (cfg.intensity_params.median_width < 0 ||
      (cfg.intensity_params.median_width > 1 && cfg.intensity_params.median_width % 2 == 0))
    diags.push_back("extract: median_width must be 0 or odd");
  if (cfg.jitter_sigma_px < 0) diags.push_back("corrupt: jitter_sigma_px must be >= 0");
  if (cfg.dropout_rate < 0 || cfg.dropout_rate >= 1)
    diags.push_back("corrupt: dropout_rate must be in [0, 1)");
  if (cfg.emd_cap == 0) diags.push_back("metrics: emd_cap must be > 0");
  for (const std::string& s : cfg.stages)
    if (s != "simulate" && s != "extract" && s != "fit" && s != "mesh" && s != "resample" &&
        s != "metrics")
      diags.push_back("pipeline: unknown stage \"" + s + "\"");
  return diags;
}

}  // namespace aoct
