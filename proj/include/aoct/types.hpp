#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aoct {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Cartesian point in scanner coordinates [mm]. The catheter trajectory is
/// the z axis; the angle convention throughout is x = r*sin(theta),
/// y = r*cos(theta), i.e. theta is measured from +y toward +x.
struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  Point3 operator+(const Point3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Point3 operator-(const Point3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Point3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Point3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  double squared_norm() const { return x * x + y * y + z * z; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Point3 cross(const Point3& a, const Point3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

/// Wall sample in cylindrical coordinates around the catheter axis.
struct CylPoint {
  double r_tiss = 0.0;  // radial distance from the catheter axis [mm], >= 0
  double theta = 0.0;   // rotation angle [rad], in [0, 2*pi)
  double z_tiss = 0.0;  // axial position [mm]
};

/// Physical parameters of one pull-back scan. Binds (frame, column) indices
/// to poses along the helical trajectory.
struct ScanConfig {
  double v_cath = 0.5;       // pull-back speed [mm/s]
  double omega = kTwoPi;     // angular speed of the beam [rad/s]
  double phi_cath = 1.3089969389957472;  // beam polar angle vs catheter axis [rad] (75 deg)
  double f_samp = 1024.0;    // A-line sampling rate [1/s]
  int n_columns = 1024;      // A-lines per frame (N); one frame per revolution
  int n_frames = 100;        // frame count (M)
  double d_max = 6.0;        // maximum line-of-sight range [mm]
  int frame_height = 1024;   // rows per frame (H)
  double z_start = 5.0;      // catheter z at t = 0 [mm]
  int pullback_sign = 1;     // +1/-1, direction of catheter travel along z
  double theta_offset = 0.0; // rotation of column 0 [rad]; acquisition phase is not standardized

  double pixel_size() const { return d_max / frame_height; }
  double frame_period() const { return n_columns / f_samp; }
  double scan_duration() const { return n_frames * frame_period(); }
  double z_end() const { return z_start + pullback_sign * v_cath * scan_duration(); }

  /// Throws std::invalid_argument on the first violated invariant.
  void validate() const;
};

/// One A-line of a scan, addressed by raster position.
struct ALineSample {
  int frame_index = 0;
  int column_index = 0;
  std::optional<double> d_tiss;  // line-of-sight wall distance [mm]; absent = no wall detected
};

enum class SourceTag : uint8_t { mask = 0, intensity = 1, resampled = 2 };

const char* to_string(SourceTag tag);

/// Per-column wall distances for one frame.
struct ALineBoundary {
  struct Entry {
    std::optional<double> d_tiss;  // [mm]; absent = no wall detected on this column
    SourceTag source = SourceTag::mask;
    bool low_confidence = false;   // set when several disjoint lumen runs qualified
  };

  int frame_index = 0;
  std::vector<Entry> columns;

  int present_count() const;
};

/// Row-major rectangular image; row = line-of-sight depth bin, col = rotation angle.
template <typename T>
struct Image {
  int width = 0;   // columns (N, angle)
  int height = 0;  // rows (H, depth)
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{}) : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& at(int row, int col) { return data[static_cast<size_t>(row) * width + col]; }
  const T& at(int row, int col) const { return data[static_cast<size_t>(row) * width + col]; }
  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

/// Intensity frame for one laser revolution, values in [0, 1] once normalized.
struct PolarFrame {
  int frame_index = 0;
  Image<float> image;
  bool degenerate = false;  // constant input frame; normalization emitted all zeros
};

/// Binary occupancy frame; 1 = lumen (catheter side of the wall), 0 = wall/beyond.
struct SegmentationMask {
  int frame_index = 0;
  Image<uint8_t> image;
};

/// Cartesian wall samples with (frame, column) provenance.
struct PointCloud {
  struct Provenance {
    int frame_index = 0;
    int column_index = 0;
  };

  std::vector<Point3> points;        // [mm]
  std::vector<Provenance> provenance;  // same length as points

  size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  struct Aabb {
    Point3 lo, hi;
    Point3 center() const { return {(lo.x + hi.x) / 2, (lo.y + hi.y) / 2, (lo.z + hi.z) / 2}; }
  };
  /// Throws std::domain_error when the cloud is empty.
  Aabb bounds() const;
};

/// Similarity transform between world [mm] and the unit-ball fitting space.
struct UnitTransform {
  Point3 center;       // [mm]
  double scale = 1.0;  // mm per unit, > 0

  Point3 to_unit(const Point3& p) const {
    return {(p.x - center.x) / scale, (p.y - center.y) / scale, (p.z - center.z) / scale};
  }
  Point3 to_world(const Point3& p) const {
    return {p.x * scale + center.x, p.y * scale + center.y, p.z * scale + center.z};
  }
};

}  // namespace aoct
