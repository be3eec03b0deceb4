#pragma once

#include <utility>
#include <vector>

#include "aoct/types.hpp"

namespace aoct {

struct MaskBoundaryParams {
  int max_start_row = -1;  // K: a run must start within the first K rows; -1 = H/8
  int gap_tolerance = 3;   // g: merge runs separated by at most this many zero rows
};

/// Per column, the longest contiguous run of lumen pixels starting within the
/// first K rows (runs separated by gaps <= g are merged first); the boundary
/// sits at the far edge of that run, center-of-pixel convention:
/// d_tiss = (last run row + 0.5) * (d_max / H). Columns without a qualifying
/// run are absent. Several disjoint candidates set low_confidence and the
/// tie-break prefers the longest, then the one nearest the catheter.
ALineBoundary boundary_from_mask(const SegmentationMask& mask, const ScanConfig& cfg,
                                 const MaskBoundaryParams& params = {});

struct IntensityBoundaryParams {
  double threshold = 0.5;  // tau, on normalized intensities
  int min_run = 3;         // l: rows the response must stay above tau
  int median_width = 0;    // w: circular median filter across columns; 0/1 = off, else odd
};

/// Classical fallback teacher: the wall is the first sustained super-threshold
/// response down each column, d_tiss = first_row * (d_max / H) (leading-edge
/// convention, the midpoint of the quantization interval). tau = 0 degenerates
/// to the first row of every column.
ALineBoundary boundary_from_intensity(const PolarFrame& frame, const ScanConfig& cfg,
                                      const IntensityBoundaryParams& params = {});

/// Inverse of boundary extraction under the simulator's occupancy rule:
/// mask(row, col) = 1 iff row * (d_max/H) < d_tiss. Absent columns rasterize
/// as all-lumen (no wall within range).
SegmentationMask rasterize_mask(const ALineBoundary& boundary, const ScanConfig& cfg);

/// Helical scan conversion applied to every present column: (frame, column,
/// d_tiss) -> cylindrical -> Cartesian, concatenated in (frame, column) order.
/// Boundaries must be sorted by frame_index; duplicates are a domain error.
PointCloud pointcloud_from_scan(const std::vector<ALineBoundary>& boundaries,
                                const ScanConfig& cfg);

/// Maps the cloud into the unit ball: center = bounding-box center, scale =
/// max distance to center * 1.05. Requires >= 4 points and a nonzero extent.
std::pair<PointCloud, UnitTransform> normalize_pointcloud(const PointCloud& pc);

}  // namespace aoct
