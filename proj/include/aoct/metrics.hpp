#pragma once

#include <cstdint>
#include <vector>

#include "aoct/mesh.hpp"
#include "aoct/types.hpp"

namespace aoct {

/// 2|A∩B| / (|A|+|B|); nonzero pixels count as foreground. Both masks empty
/// is defined as 1.0. Throws std::invalid_argument on dimension mismatch.
double dice(const SegmentationMask& a, const SegmentationMask& b);

/// Symmetric squared chamfer distance, per-set means:
/// (1/|A|) Σ_a min_b ‖a−b‖² + (1/|B|) Σ_b min_a ‖a−b‖².
/// Throws std::invalid_argument when either set is empty.
double chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b);

/// max( max_a min_b ‖a−b‖, max_b min_a ‖a−b‖ ), unsquared.
double hausdorff(const std::vector<Point3>& a, const std::vector<Point3>& b);

/// Earth mover's distance: mean Euclidean cost of the exact optimal
/// one-to-one assignment. Cardinalities are equalized first by uniform
/// subsampling without replacement to min(|A|, |B|, cap); each set draws
/// from its own stream keyed by (seed, content hash), so the result is
/// symmetric in (A, B) and deterministic for a given seed.
double emd(const std::vector<Point3>& a, const std::vector<Point3>& b, uint64_t seed,
           size_t cap = 256);

/// Exact minimal-cost assignment of rows to columns on a square cost matrix
/// (Hungarian algorithm with potentials, O(n³)). Returns row -> column.
std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost);

/// Line-of-sight distance errors between two boundary sets on the same
/// (frame, column) grid, aggregated per frame first: per-frame mean/max of
/// |d_gt − d_pred| over jointly present columns, then mean ± population std
/// over frames that have joint columns. Columns present on only one side are
/// tallied as coverage deficits, never folded into the error.
struct ALineErrorReport {
  struct FrameRow {
    int frame_index = 0;
    int joint = 0;        // columns present on both sides
    int gt_only = 0;      // coverage deficit of the prediction
    int pred_only = 0;    // spurious predictions
    double mu_mm = 0.0;   // mean |error| over joint columns
    double max_mm = 0.0;  // max  |error| over joint columns
  };

  std::vector<FrameRow> frames;
  double mu_dist_mm = 0.0;  // mean over frames of mu_mm
  double mu_dist_std_mm = 0.0;
  double max_dist_mm = 0.0;  // mean over frames of max_mm
  double max_dist_std_mm = 0.0;
  double global_max_mm = 0.0;
  long total_joint = 0, total_gt_only = 0, total_pred_only = 0;
};

/// Throws std::invalid_argument when the grids disagree, std::domain_error
/// when no column is present on both sides anywhere.
ALineErrorReport aline_errors(const std::vector<ALineBoundary>& gt,
                              const std::vector<ALineBoundary>& pred);

/// Total variation of one frame's wall profile, Σ|d[c_next] − d[c]| over
/// consecutive columns of the circular joint-present set (columns present in
/// both `values` and `reference`); the d values come from `values`. Frames
/// with fewer than 2 joint columns give 0. Used for the smoothing comparison,
/// where the joint set makes raw and resampled TV comparable.
double joint_total_variation(const ALineBoundary& values, const ALineBoundary& reference);

/// Squared Euclidean distance from p to the closest point of triangle abc.
double point_triangle_sqdist(const Point3& p, const Point3& a, const Point3& b, const Point3& c);

/// BVH over triangles for exact nearest point-to-surface queries; results
/// are identical to minimizing point_triangle_sqdist over every triangle.
class MeshDistance {
 public:
  explicit MeshDistance(const TriangleMesh& mesh);
  /// Unsquared distance to the closest surface point.
  double distance(const Point3& p) const;

 private:
  struct Node {
    Point3 lo, hi;
    int left = -1, right = -1;  // internal when left >= 0
    int begin = 0, end = 0;     // leaf triangle range in order_
  };
  double sq_to_box(const Point3& p, const Node& n) const;

  const TriangleMesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
};

/// Distances from every cloud point to the mesh surface (exact, BVH
/// accelerated). Percentiles use the nearest-rank rule on the sorted
/// distances. Throws std::invalid_argument on empty inputs.
struct PointMeshReport {
  double mean_mm = 0.0;
  double max_mm = 0.0;
  double p50_mm = 0.0, p90_mm = 0.0, p95_mm = 0.0, p99_mm = 0.0;
  std::vector<double> distances;  // per point, input order
};

PointMeshReport point_to_mesh(const PointCloud& pc, const TriangleMesh& mesh);
PointMeshReport point_to_mesh(const std::vector<Point3>& points, const TriangleMesh& mesh);

}  // namespace aoct
