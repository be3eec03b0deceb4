#include "aoct/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace aoct {

namespace {

double coord(const Point3& p, int axis) {
  return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
}

}  // namespace

KdTree3::KdTree3(const std::vector<Point3>& points) : points_(points) {
  index_.resize(points_.size());
  for (size_t i = 0; i < index_.size(); ++i) index_[i] = i;
  if (!points_.empty()) root_ = build(0, points_.size());
}

size_t KdTree3::build(size_t begin, size_t end) {
  Node node;
  if (end - begin <= kLeafSize) {
    node.begin = begin;
    node.end = end;
    nodes_.push_back(node);
    return nodes_.size() - 1;
  }

  Point3 lo = points_[index_[begin]], hi = lo;
  for (size_t i = begin; i < end; ++i) {
    const Point3& p = points_[index_[i]];
    lo.x = std::min(lo.x, p.x); hi.x = std::max(hi.x, p.x);
    lo.y = std::min(lo.y, p.y); hi.y = std::max(hi.y, p.y);
    lo.z = std::min(lo.z, p.z); hi.z = std::max(hi.z, p.z);
  }
  const double ex = hi.x - lo.x, ey = hi.y - lo.y, ez = hi.z - lo.z;
  int axis = 0;
  if (ey > ex || ez > ex) axis = (ey >= ez) ? 1 : 2;

  const size_t mid = begin + (end - begin) / 2;
  std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                   [&](size_t a, size_t b) {
                     const double ca = coord(points_[a], axis), cb = coord(points_[b], axis);
                     return ca < cb || (ca == cb && a < b);
                   });
  node.axis = axis;
  node.split = coord(points_[index_[mid]], axis);

  const size_t self = nodes_.size();
  nodes_.push_back(node);
  const size_t left = build(begin, mid);
  const size_t right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

// visit(index, squared_distance) -> current pruning radius (squared).
template <typename Visit>
void KdTree3::search(const Point3& q, Visit&& visit) const {
  struct Frame {
    size_t node;
    double plane_sq;  // squared distance from q to the splitting plane path
  };
  Frame stack[64];
  int top = 0;
  stack[top++] = {root_, 0.0};
  double radius_sq = std::numeric_limits<double>::infinity();

  while (top > 0) {
    const Frame f = stack[--top];
    if (f.plane_sq > radius_sq) continue;
    const Node& node = nodes_[f.node];
    if (node.axis < 0) {
      for (size_t i = node.begin; i < node.end; ++i) {
        const size_t idx = index_[i];
        radius_sq = visit(idx, squared_distance(q, points_[idx]));
      }
      continue;
    }
    const double diff = coord(q, node.axis) - node.split;
    const size_t near = diff < 0 ? node.left : node.right;
    const size_t far = diff < 0 ? node.right : node.left;
    stack[top++] = {far, diff * diff};
    stack[top++] = {near, f.plane_sq};
  }
}

size_t KdTree3::nearest(const Point3& q) const {
  if (points_.empty()) throw std::domain_error("KdTree3::nearest: empty tree");
  size_t best = 0;
  double best_sq = std::numeric_limits<double>::infinity();
  search(q, [&](size_t idx, double d_sq) {
    if (d_sq < best_sq || (d_sq == best_sq && idx < best)) {
      best_sq = d_sq;
      best = idx;
    }
    return best_sq;
  });
  return best;
}

double KdTree3::nearest_squared_distance(const Point3& q) const {
  if (points_.empty()) throw std::domain_error("KdTree3: empty tree");
  double best_sq = std::numeric_limits<double>::infinity();
  search(q, [&](size_t, double d_sq) {
    best_sq = std::min(best_sq, d_sq);
    return best_sq;
  });
  return best_sq;
}

std::vector<size_t> KdTree3::knn(const Point3& q, size_t k) const {
  k = std::min(k, points_.size());
  if (k == 0) return {};

  using Entry = std::pair<double, size_t>;  // (squared distance, index)
  std::vector<Entry> heap;  // max-heap on (d, idx)
  heap.reserve(k + 1);
  auto cmp = [](const Entry& a, const Entry& b) { return a < b; };

  search(q, [&](size_t idx, double d_sq) {
    const Entry e{d_sq, idx};
    if (heap.size() < k) {
      heap.push_back(e);
      std::push_heap(heap.begin(), heap.end(), cmp);
    } else if (e < heap.front()) {
      std::pop_heap(heap.begin(), heap.end(), cmp);
      heap.back() = e;
      std::push_heap(heap.begin(), heap.end(), cmp);
    }
    return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().first;
  });

  std::sort(heap.begin(), heap.end());
  std::vector<size_t> out(heap.size());
  for (size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
  return out;
}

double KdTree3::knn_distance(const Point3& q, size_t k) const {
  if (points_.empty()) throw std::domain_error("KdTree3: empty tree");
  k = std::min(std::max<size_t>(k, 1), points_.size());
  const auto ids = knn(q, k);
  return std::sqrt(squared_distance(q, points_[ids.back()]));
}

}  // namespace aoct
