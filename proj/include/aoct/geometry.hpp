#pragma once

#include "aoct/types.hpp"

namespace aoct {

/// Acquisition time of an A-line under the raster convention
/// t = (frame*N + column) / f_samp. Throws std::out_of_range for bad indices.
double sample_time(const ALineSample& sample, const ScanConfig& cfg);

/// Beam pose at time t: rotation angle wrapped to [0, 2*pi) and catheter z.
/// Constant-speed pull-back, z_cath = z_start + sign * v_cath * t.
struct ALinePose {
  double theta = 0.0;   // [rad]
  double z_cath = 0.0;  // [mm]
};
ALinePose aline_pose(double t, const ScanConfig& cfg);

/// Unit direction of the emitted ray at angle theta:
/// (sin(phi)*sin(theta), sin(phi)*cos(theta), -cos(phi)).
Point3 aline_direction(double theta, const ScanConfig& cfg);

/// Ray of an A-line in catheter coordinates: origin on the z axis at z_cath.
struct ALineRay {
  Point3 origin;
  Point3 direction;  // unit length
};
ALineRay aline_ray(double t, const ScanConfig& cfg);

/// Cylindrical wall coordinates of a detected sample:
/// r = d*sin(phi), z = z_cath - d*cos(phi).
/// Throws std::domain_error when d_tiss is absent or outside [0, d_max].
CylPoint to_cylindrical(const ALineSample& sample, const ScanConfig& cfg);

/// x = r*sin(theta), y = r*cos(theta), z unchanged.
Point3 to_cartesian(const CylPoint& cyl);

/// Inverse of to_cartesian up to angle wrapping; r = hypot(x, y),
/// theta = atan2(x, y) wrapped to [0, 2*pi).
CylPoint to_cylindrical_axis(const Point3& p);

/// Per-frame intensity normalization: clamp to [mu - sigma, mu + sigma]
/// (population statistics over all pixels), then min-max rescale to [0, 1].
/// A constant frame yields all zeros with the degenerate flag set.
PolarFrame normalize_intensity(const PolarFrame& frame);

/// Wraps an angle into [0, 2*pi).
double wrap_angle(double theta);

}  // namespace aoct
