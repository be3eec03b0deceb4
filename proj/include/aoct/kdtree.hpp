#pragma once

#include <cstddef>
#include <vector>

#include "aoct/types.hpp"

namespace aoct {

/// Exact nearest-neighbor queries over a fixed set of 3D points.
/// Median-split k-d tree; results match a brute-force scan bit for bit
/// because the per-pair distance expression is identical.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(const std::vector<Point3>& points);

  size_t size() const { return points_.size(); }
  const Point3& point(size_t i) const { return points_[i]; }

  /// Index of the nearest point to q; ties resolve to the lowest index.
  /// Throws std::domain_error on an empty tree.
  size_t nearest(const Point3& q) const;

  /// Squared distance to the nearest point.
  double nearest_squared_distance(const Point3& q) const;

  /// Indices of the k nearest points, ordered by increasing distance
  /// (ties by index). k is clamped to size().
  std::vector<size_t> knn(const Point3& q, size_t k) const;

  /// Distance to the k-th nearest point (1-based k), clamped to size().
  double knn_distance(const Point3& q, size_t k) const;

 private:
  struct Node {
    int axis = -1;        // -1 = leaf
    double split = 0.0;
    size_t left = 0, right = 0;  // children when internal
    size_t begin = 0, end = 0;   // index range when leaf
  };

  size_t build(size_t begin, size_t end);
  template <typename Visit>
  void search(const Point3& q, Visit&& visit) const;

  std::vector<Point3> points_;
  std::vector<size_t> index_;   // permutation into points_, leaf ranges
  std::vector<Node> nodes_;
  size_t root_ = 0;

  static constexpr size_t kLeafSize = 16;
};

inline double squared_distance(const Point3& a, const Point3& b) {
  const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

}  // namespace aoct
