#include "aoct/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace aoct {

const char* to_string(SourceTag tag) {
  switch (tag) {
    case SourceTag::mask: return "mask";
    case SourceTag::intensity: return "intensity";
    case SourceTag::resampled: return "resampled";
  }
  return "unknown";
}

int ALineBoundary::present_count() const {
  int n = 0;
  for (const auto& c : columns) n += c.d_tiss.has_value() ? 1 : 0;
  return n;
}

PointCloud::Aabb PointCloud::bounds() const {
  if (points.empty()) throw std::domain_error("PointCloud::bounds: empty cloud");
  Aabb box{points.front(), points.front()};
  for (const Point3& p : points) {
    box.lo.x = std::min(box.lo.x, p.x);
    box.lo.y = std::min(box.lo.y, p.y);
    box.lo.z = std::min(box.lo.z, p.z);
    box.hi.x = std::max(box.hi.x, p.x);
    box.hi.y = std::max(box.hi.y, p.y);
    box.hi.z = std::max(box.hi.z, p.z);
  }
  return box;
}

void ScanConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("ScanConfig: " + msg); };
  if (!(v_cath > 0)) fail("v_cath must be > 0");
  if (!(omega > 0)) fail("omega must be > 0");
  if (!(f_samp > 0)) fail("f_samp must be > 0");
  if (!(d_max > 0)) fail("d_max must be > 0");
  if (n_columns < 4) fail("n_columns must be >= 4");
  if (frame_height < 4) fail("frame_height must be >= 4");
  if (n_frames < 1) fail("n_frames must be >= 1");
  if (!(phi_cath > 0.0 && phi_cath < std::numbers::pi)) fail("phi_cath must lie in (0, pi)");
  if (pullback_sign != 1 && pullback_sign != -1) fail("pullback_sign must be +1 or -1");
  if (!std::isfinite(z_start)) fail("z_start must be finite");
  if (!std::isfinite(theta_offset)) fail("theta_offset must be finite");
  // One revolution per frame: N A-lines must span exactly 2*pi.
  const double ratio = n_columns * omega / (kTwoPi * f_samp);
  if (std::abs(ratio - 1.0) >= 1e-9)
    fail("n_columns, omega and f_samp are inconsistent (need one frame per revolution)");
  if (!(pixel_size() > 0)) fail("pixel size d_max/frame_height must be > 0");
}

double wrap_angle(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0) w += kTwoPi;
  // fmod can return exactly 2*pi after the correction when theta is a tiny negative.
  if (w >= kTwoPi) w = 0.0;
  return w;
}

double sample_time(const ALineSample& sample, const ScanConfig& cfg) {
  if (sample.frame_index < 0 || sample.frame_index >= cfg.n_frames)
    throw std::out_of_range("sample_time: frame_index out of range");
  if (sample.column_index < 0 || sample.column_index >= cfg.n_columns)
    throw std::out_of_range("sample_time: column_index out of range");
  const double k = static_cast<double>(sample.frame_index) * cfg.n_columns + sample.column_index;
  return k / cfg.f_samp;
}

ALinePose aline_pose(double t, const ScanConfig& cfg) {
  if (t < 0) throw std::domain_error("aline_pose: t must be >= 0");
  ALinePose pose;
  pose.theta = wrap_angle(cfg.omega * t + cfg.theta_offset);
  pose.z_cath = cfg.z_start + cfg.pullback_sign * cfg.v_cath * t;
  return pose;
}

Point3 aline_direction(double theta, const ScanConfig& cfg) {
  const double sp = std::sin(cfg.phi_cath);
  const double cp = std::cos(cfg.phi_cath);
  return {sp * std::sin(theta), sp * std::cos(theta), -cp};
}

ALineRay aline_ray(double t, const ScanConfig& cfg) {
  const ALinePose pose = aline_pose(t, cfg);
  return {{0.0, 0.0, pose.z_cath}, aline_direction(pose.theta, cfg)};
}

CylPoint to_cylindrical(const ALineSample& sample, const ScanConfig& cfg) {
  if (!sample.d_tiss.has_value())
    throw std::domain_error("to_cylindrical: sample carries no wall distance");
  const double d = *sample.d_tiss;
  if (d < 0 || d > cfg.d_max)
    throw std::domain_error("to_cylindrical: d_tiss outside [0, d_max]");
  const double t = sample_time(sample, cfg);
  const ALinePose pose = aline_pose(t, cfg);
  CylPoint cyl;
  cyl.r_tiss = d * std::sin(cfg.phi_cath);
  cyl.theta = pose.theta;
  cyl.z_tiss = pose.z_cath - d * std::cos(cfg.phi_cath);
  return cyl;
}

Point3 to_cartesian(const CylPoint& cyl) {
  return {cyl.r_tiss * std::sin(cyl.theta), cyl.r_tiss * std::cos(cyl.theta), cyl.z_tiss};
}

CylPoint to_cylindrical_axis(const Point3& p) {
  CylPoint cyl;
  cyl.r_tiss = std::hypot(p.x, p.y);
  cyl.theta = cyl.r_tiss > 0 ? wrap_angle(std::atan2(p.x, p.y)) : 0.0;
  cyl.z_tiss = p.z;
  return cyl;
}

PolarFrame normalize_intensity(const PolarFrame& frame) {
  if (frame.image.empty()) throw std::invalid_argument("normalize_intensity: empty frame");
  const auto& px = frame.image.data;
  const double n = static_cast<double>(px.size());

  double mean = 0.0;
  for (float v : px) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : px) {
    const double d = v - mean;
    var += d * d;
  }
  const double sigma = std::sqrt(var / n);

  PolarFrame out;
  out.frame_index = frame.frame_index;
  out.image = Image<float>(frame.image.width, frame.image.height);

  const double lo_clamp = mean - sigma;
  const double hi_clamp = mean + sigma;
  double lo = hi_clamp, hi = lo_clamp;
  if (sigma > 0) {
    for (float v : px) {
      const double c = std::clamp(static_cast<double>(v), lo_clamp, hi_clamp);
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
  }
  if (sigma == 0 || hi - lo <= 0) {
    out.degenerate = true;  // constant frame: no contrast left to rescale
    return out;
  }
  const double inv = 1.0 / (hi - lo);
  for (size_t i = 0; i < px.size(); ++i) {
    const double c = std::clamp(static_cast<double>(px[i]), lo_clamp, hi_clamp);
    out.image.data[i] = static_cast<float>((c - lo) * inv);
  }
  return out;
}

}  // namespace aoct
