#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "aoct/field.hpp"
#include "aoct/types.hpp"

namespace aoct {

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Point3> normals;  // per vertex, optional (empty = none)

  bool empty() const { return triangles.empty(); }
};

struct GridSpec {
  int nx = 192, ny = 192, nz = 192;
  Point3 lo{-1.05, -1.05, -1.05};
  Point3 hi{1.05, 1.05, 1.05};

  void validate() const;
  Point3 cell_size() const {
    return {(hi.x - lo.x) / (nx - 1), (hi.y - lo.y) / (ny - 1), (hi.z - lo.z) / (nz - 1)};
  }
  double cell_diagonal() const { return cell_size().norm(); }
};

/// Read-only scalar field over mm-space points. The batched entry point
/// exists so grid sampling and ray casting can amortize network evaluation.
class SdfField {
 public:
  virtual ~SdfField() = default;
  virtual double value(const Point3& p) const = 0;
  virtual void values(const std::vector<Point3>& pts, std::vector<double>& out) const;
};

/// Analytic field for tests and mocks.
class AnalyticField : public SdfField {
 public:
  explicit AnalyticField(std::function<double(const Point3&)> f) : f_(std::move(f)) {}
  double value(const Point3& p) const override { return f_(p); }

 private:
  std::function<double(const Point3&)> f_;
};

/// Faces of a trained MlpSdf as a mm-space field; evaluates batched in
/// float32 (the model stays double; evaluation error ~1e-6 relative is far
/// below mesh/raycast tolerances).
class MlpField : public SdfField {
 public:
  explicit MlpField(const MlpSdf& sdf);
  double value(const Point3& p) const override;
  void values(const std::vector<Point3>& pts, std::vector<double>& out) const override;
  const MlpSdf& model() const { return *sdf_; }

 private:
  const MlpSdf* sdf_;
  MlpNet<float> fnet_;
};

/// Marching cubes over the sampled field; vertices are interpolated to the
/// zero crossing along cell edges and shared across cells. Throws when the
/// field has no zero crossing inside the grid.
TriangleMesh extract_mesh(const SdfField& field, const GridSpec& grid);

/// Mesh of the trained model in mm. The grid lives in unit space; an
/// optional z-crop (mm) trims hallucinated end caps of open tubes by
/// clamping the grid's z range before sampling.
TriangleMesh extract_mesh(const MlpSdf& sdf, const GridSpec& grid,
                          std::optional<std::pair<double, double>> z_crop_mm = std::nullopt);

/// Area-weighted per-vertex normals.
void compute_normals(TriangleMesh& mesh);

/// Uniform area-weighted surface samples, deterministic given seed.
std::vector<Point3> sample_mesh_points(const TriangleMesh& mesh, size_t count, uint64_t seed);

struct RaycastParams {
  double d_max = 6.0;      // march limit [mm]
  double eps_hit = 1e-4;   // |f| convergence threshold [mm]
  int max_steps = 512;
};

/// Sphere tracing: step by |f| from the origin, refine sign changes by
/// bisection. Returns the smallest positive hit distance or absent.
std::optional<double> raycast_sdf(const SdfField& field, const Point3& origin, const Point3& dir,
                                  const RaycastParams& params);

/// One ray per (frame, column) with the exact acquisition geometry; batched
/// across rays. eps_hit defaults to 1e-4 * transform scale for MlpField.
std::vector<ALineBoundary> resample_boundaries(const SdfField& field, const ScanConfig& cfg,
                                               const RaycastParams& params);
std::vector<ALineBoundary> resample_boundaries(const MlpSdf& sdf, const ScanConfig& cfg);

namespace mc_tables {
extern const int16_t edge_table[256];
extern const int8_t tri_table[256][16];
}  // namespace mc_tables

}  // namespace aoct
