#pragma once

#include <cstdint>
#include <vector>

#include "aoct/types.hpp"

namespace aoct {

/// Gaussian radial narrowing of the lumen.
struct Stenosis {
  double z0 = 0.0;     // axial center [mm]
  double depth = 0.0;  // fractional radius reduction at the waist, in [0, 1)
  double width = 1.0;  // Gaussian sigma [mm], > 0
};

/// Analytic airway stand-in: a generalized tube around the z axis with
/// optional Gaussian stenoses and elliptic cross-section. The catheter is
/// offset from the lumen axis by centerline_offset, so the phantom frame and
/// the catheter frame differ by that (x, y) translation.
struct Phantom {
  double base_radius = 3.0;   // [mm]
  double length = 60.0;       // axial extent, z in [0, length] [mm]
  std::vector<Stenosis> stenoses;
  double ellipticity = 1.0;   // semi-axis ratio b/a in (0, 1]; 1 = circular
  double ellipse_angle = 0.0; // orientation of the long axis [rad]
  double offset_x = 0.0;      // catheter-to-lumen-center offset [mm]
  double offset_y = 0.0;
  bool capped = false;        // close the axial ends; default: open tube

  bool is_circular_tube() const { return stenoses.empty() && ellipticity == 1.0; }
  bool catheter_centered() const { return offset_x == 0.0 && offset_y == 0.0; }

  /// Maps a point from catheter coordinates (catheter on the z axis, the
  /// frame all reconstruction lives in) to phantom coordinates.
  Point3 catheter_to_phantom(const Point3& p) const {
    return {p.x + offset_x, p.y + offset_y, p.z};
  }

  /// Throws std::invalid_argument on a violated invariant; checks that the
  /// effective radius stays positive and the catheter stays inside the lumen.
  void validate() const;
};

/// Effective lumen radius at axial position z and rotation angle theta
/// (phantom frame, angle convention x = r*sin(theta), y = r*cos(theta)).
/// Throws std::domain_error when z lies outside [0, length].
double phantom_radius(const Phantom& ph, double z, double theta);

/// Signed distance to the lumen wall in phantom coordinates: negative inside
/// the air column, positive in the wall/outside, zero on the surface.
/// Exact for centered circular tubes; iterative surface projection otherwise
/// (error < 1e-6 * base_radius). Open ends measure to the lateral wall only.
double phantom_sdf(const Phantom& ph, const Point3& p);

/// Line-of-sight distance from the catheter to the wall for the A-line at
/// time t. Bracketing + bisection on the radial gap, |residual| < 1e-9 mm;
/// closed form for the centered circular constant tube. Returns nullopt when
/// no intersection exists within cfg.d_max.
std::optional<double> cast_aline(const Phantom& ph, double t, const ScanConfig& cfg);

/// Synthetic intensity model. Minimal by intent: a bright band at the wall
/// with exponential depth decay and optional multiplicative speckle.
struct NoiseParams {
  bool enabled = false;         // speckle + floor on/off; geometry is never noisy
  double speckle_sigma = 0.2;   // multiplicative Gaussian speckle
  double noise_floor = 0.02;    // additive lumen background when enabled
  double band_thickness = 0.6;  // bright band thickness [mm]
  double decay_length = 1.5;    // exponential decay scale past the band [mm]
};

struct SimulatedFrame {
  PolarFrame intensity;
  SegmentationMask mask;
  ALineBoundary boundary;
};

/// Everything the simulator knows about one synthetic scan.
struct GroundTruthScan {
  std::vector<PolarFrame> frames;
  std::vector<SegmentationMask> masks;
  std::vector<ALineBoundary> boundaries;
  Phantom phantom;
  ScanConfig cfg;
  uint64_t seed = 0;
};

/// Simulates one frame. The RNG stream is derived from (seed, frame_index),
/// so frames can be generated in any order or in parallel with identical
/// output. Throws std::invalid_argument when the pull-back is not covered by
/// the phantom (with margins for the oblique beam).
SimulatedFrame simulate_frame(const Phantom& ph, const ScanConfig& cfg,
                              const NoiseParams& noise, uint64_t seed, int frame_index);

GroundTruthScan simulate_scan(const Phantom& ph, const ScanConfig& cfg,
                              const NoiseParams& noise, uint64_t seed);

/// Checks the coverage precondition shared by simulate_* entry points.
/// Returns a diagnostic message, empty when coverage holds.
std::string coverage_diagnostic(const Phantom& ph, const ScanConfig& cfg);

/// Test-bed corruption: per-column Gaussian jitter (in pixels) on d_tiss plus
/// random column dropout. Deterministic given seed.
std::vector<ALineBoundary> jitter_boundaries(const std::vector<ALineBoundary>& boundaries,
                                             const ScanConfig& cfg, double jitter_sigma_px,
                                             double dropout_rate, uint64_t seed);

}  // namespace aoct
