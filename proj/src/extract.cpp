#include "aoct/extract.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "aoct/geometry.hpp"

namespace aoct {

namespace {

struct Run {
  int first = 0;
  int last = 0;
  int length() const { return last - first + 1; }
};

std::vector<Run> merged_runs(const SegmentationMask& mask, int col, int gap) {
  std::vector<Run> runs;
  const int h = mask.image.height;
  int row = 0;
  while (row < h) {
    if (mask.image.at(row, col) == 0) {
      ++row;
      continue;
    }
    Run r{row, row};
    while (row + 1 < h && mask.image.at(row + 1, col) != 0) r.last = ++row;
    if (!runs.empty() && r.first - runs.back().last - 1 <= gap)
      runs.back().last = r.last;
    else
      runs.push_back(r);
    ++row;
  }
  return runs;
}

}  // namespace

ALineBoundary boundary_from_mask(const SegmentationMask& mask, const ScanConfig& cfg,
                                 const MaskBoundaryParams& params) {
  if (mask.image.width != cfg.n_columns || mask.image.height != cfg.frame_height)
    throw std::invalid_argument("boundary_from_mask: mask dimensions do not match the scan");
  const int k = params.max_start_row >= 0 ? params.max_start_row : cfg.frame_height / 8;
  const double px = cfg.pixel_size();

  ALineBoundary out;
  out.frame_index = mask.frame_index;
  out.columns.resize(mask.image.width);
  for (int col = 0; col < mask.image.width; ++col) {
    auto& entry = out.columns[col];
    entry.source = SourceTag::mask;

    int candidates = 0;
    Run best{0, -1};
    for (const Run& r : merged_runs(mask, col, params.gap_tolerance)) {
      if (r.first >= k) continue;
      ++candidates;
      if (r.length() > best.length()) best = r;  // ties keep the earlier (nearer) run
    }
    if (candidates == 0) continue;
    entry.d_tiss = (best.last + 0.5) * px;
    entry.low_confidence = candidates > 1;
  }
  return out;
}

ALineBoundary boundary_from_intensity(const PolarFrame& frame, const ScanConfig& cfg,
                                      const IntensityBoundaryParams& params) {
  if (frame.image.width != cfg.n_columns || frame.image.height != cfg.frame_height)
    throw std::invalid_argument("boundary_from_intensity: frame dimensions do not match the scan");
  if (params.min_run < 1)
    throw std::invalid_argument("boundary_from_intensity: min_run must be >= 1");
  const int w = params.median_width;
  if (w > 1 && w % 2 == 0)
    throw std::invalid_argument("boundary_from_intensity: median_width must be odd");
  const double px = cfg.pixel_size();
  const int n = frame.image.width, h = frame.image.height;

  ALineBoundary out;
  out.frame_index = frame.frame_index;
  out.columns.resize(n);
  for (int col = 0; col < n; ++col) {
    auto& entry = out.columns[col];
    entry.source = SourceTag::intensity;
    for (int row = 0; row + params.min_run <= h; ++row) {
      bool sustained = true;
      for (int i = 0; i < params.min_run && sustained; ++i)
        sustained = frame.image.at(row + i, col) >= params.threshold;
      if (sustained) {
        entry.d_tiss = row * px;
        break;
      }
    }
  }

  if (w > 1) {
    std::vector<std::optional<double>> filtered(n);
    std::vector<double> window;
    for (int col = 0; col < n; ++col) {
      if (!out.columns[col].d_tiss) continue;
      window.clear();
      for (int off = -w / 2; off <= w / 2; ++off) {
        const int c = ((col + off) % n + n) % n;  // columns are angular, so wrap
        if (out.columns[c].d_tiss) window.push_back(*out.columns[c].d_tiss);
      }
      std::sort(window.begin(), window.end());
      filtered[col] = window[window.size() / 2];
    }
    for (int col = 0; col < n; ++col) out.columns[col].d_tiss = filtered[col];
  }
  return out;
}

SegmentationMask rasterize_mask(const ALineBoundary& boundary, const ScanConfig& cfg) {
  if (static_cast<int>(boundary.columns.size()) != cfg.n_columns)
    throw std::invalid_argument("rasterize_mask: column count does not match the scan");
  SegmentationMask mask;
  mask.frame_index = boundary.frame_index;
  mask.image = Image<uint8_t>(cfg.n_columns, cfg.frame_height);
  const double px = cfg.pixel_size();
  for (int col = 0; col < cfg.n_columns; ++col) {
    const auto& d = boundary.columns[col].d_tiss;
    const double wall = d ? *d : std::numeric_limits<double>::infinity();
    for (int row = 0; row < cfg.frame_height; ++row)
      mask.image.at(row, col) = (row * px < wall) ? 1 : 0;  // same rule as the simulator
  }
  return mask;
}

PointCloud pointcloud_from_scan(const std::vector<ALineBoundary>& boundaries,
                                const ScanConfig& cfg) {
  for (size_t i = 1; i < boundaries.size(); ++i) {
    if (boundaries[i].frame_index == boundaries[i - 1].frame_index)
      throw std::domain_error("pointcloud_from_scan: duplicate frame index " +
                              std::to_string(boundaries[i].frame_index));
    if (boundaries[i].frame_index < boundaries[i - 1].frame_index)
      throw std::invalid_argument("pointcloud_from_scan: boundaries not sorted by frame");
  }

  PointCloud pc;
  for (const ALineBoundary& b : boundaries) {
    if (b.frame_index < 0 || b.frame_index >= cfg.n_frames)
      throw std::out_of_range("pointcloud_from_scan: frame index out of range");
    if (static_cast<int>(b.columns.size()) != cfg.n_columns)
      throw std::invalid_argument("pointcloud_from_scan: column count does not match the scan");
    for (int col = 0; col < cfg.n_columns; ++col) {
      const auto& entry = b.columns[col];
      if (!entry.d_tiss) continue;
      const ALineSample sample{b.frame_index, col, entry.d_tiss};
      pc.points.push_back(to_cartesian(to_cylindrical(sample, cfg)));
      pc.provenance.push_back({b.frame_index, col});
    }
  }
  return pc;
}

std::pair<PointCloud, UnitTransform> normalize_pointcloud(const PointCloud& pc) {
  if (pc.size() < 4)
    throw std::domain_error("normalize_pointcloud: need at least 4 points");
  const PointCloud::Aabb box = pc.bounds();

  UnitTransform tf;
  tf.center = box.center();
  double max_d = 0.0;
  for (const Point3& p : pc.points) max_d = std::max(max_d, (p - tf.center).norm());
  if (max_d <= 0.0)
    throw std::domain_error("normalize_pointcloud: degenerate point cloud");
  tf.scale = max_d * 1.05;

  PointCloud unit;
  unit.points.reserve(pc.size());
  unit.provenance = pc.provenance;
  for (const Point3& p : pc.points) unit.points.push_back(tf.to_unit(p));
  return {std::move(unit), tf};
}

}  // namespace aoct
