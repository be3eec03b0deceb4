#include "aoct/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>

#include "aoct/kdtree.hpp"
#include "aoct/parallel.hpp"
#include "aoct/rng.hpp"

namespace aoct {

double dice(const SegmentationMask& a, const SegmentationMask& b) {
  if (a.image.width != b.image.width || a.image.height != b.image.height)
    throw std::invalid_argument("dice: mask dimensions differ");
  long na = 0, nb = 0, ni = 0;
  for (size_t i = 0; i < a.image.data.size(); ++i) {
    const bool fa = a.image.data[i] != 0, fb = b.image.data[i] != 0;
    na += fa;
    nb += fb;
    ni += fa && fb;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * double(ni) / double(na + nb);
}

namespace {

constexpr size_t kNnChunk = 1024;

// Per-chunk partial sums/maxes of nearest-neighbor distances, reduced in
// chunk order so the result is independent of the worker count.
void nn_fold(const std::vector<Point3>& from, const KdTree3& to, double& sum_sq, double& max_d) {
  const size_t chunks = chunk_count(from.size(), kNnChunk);
  std::vector<double> part_sum(chunks, 0.0), part_max(chunks, 0.0);
  parallel_chunks(from.size(), kNnChunk, [&](size_t chunk, size_t begin, size_t end) {
    double s = 0.0, m = 0.0;
    for (size_t i = begin; i < end; ++i) {
      const double d2 = to.nearest_squared_distance(from[i]);
      s += d2;
      m = std::max(m, d2);
    }
    part_sum[chunk] = s;
    part_max[chunk] = m;
  });
  sum_sq = 0.0;
  max_d = 0.0;
  for (size_t c = 0; c < chunks; ++c) {
    sum_sq += part_sum[c];
    max_d = std::max(max_d, part_max[c]);
  }
  max_d = std::sqrt(max_d);
}

}  // namespace

double chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("chamfer: empty point set");
  KdTree3 ta(a), tb(b);
  double sab = 0, sba = 0, unused = 0;
  nn_fold(a, tb, sab, unused);
  nn_fold(b, ta, sba, unused);
  return sab / double(a.size()) + sba / double(b.size());
}

double hausdorff(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("hausdorff: empty point set");
  KdTree3 ta(a), tb(b);
  double unused = 0, mab = 0, mba = 0;
  nn_fold(a, tb, unused, mab);
  nn_fold(b, ta, unused, mba);
  return std::max(mab, mba);
}

std::vector<int> solve_assignment(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  for (const auto& row : cost)
    if (static_cast<int>(row.size()) != n)
      throw std::invalid_argument("solve_assignment: cost matrix not square");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Potentials formulation; p[j] = row matched to column j (1-based).
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

namespace {

uint64_t content_hash(const std::vector<Point3>& pts) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over coordinate bit patterns
  auto eat = [&h](double x) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(x));
    std::memcpy(&bits, &x, sizeof(bits));
    for (int k = 0; k < 8; ++k) {
      h ^= (bits >> (8 * k)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (const Point3& p : pts) {
    eat(p.x);
    eat(p.y);
    eat(p.z);
  }
  return h;
}

std::vector<Point3> equalize(const std::vector<Point3>& pts, size_t m, uint64_t seed) {
  if (pts.size() <= m) return pts;
  Rng rng(derive_seed(seed, content_hash(pts)));
  std::vector<size_t> idx = rng.sample_without_replacement(pts.size(), m);
  std::vector<Point3> out(m);
  for (size_t i = 0; i < m; ++i) out[i] = pts[idx[i]];
  return out;
}

}  // namespace

double emd(const std::vector<Point3>& a, const std::vector<Point3>& b, uint64_t seed, size_t cap) {
  if (a.empty() || b.empty()) throw std::invalid_argument("emd: empty point set");
  const size_t m = std::min({a.size(), b.size(), cap});
  const std::vector<Point3> sa = equalize(a, m, seed), sb = equalize(b, m, seed);

  std::vector<std::vector<double>> cost(m, std::vector<double>(m));
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < m; ++j) cost[i][j] = (sa[i] - sb[j]).norm();
  const std::vector<int> match = solve_assignment(cost);
  double total = 0.0;
  for (size_t i = 0; i < m; ++i) total += cost[i][match[i]];
  return total / double(m);
}

ALineErrorReport aline_errors(const std::vector<ALineBoundary>& gt,
                              const std::vector<ALineBoundary>& pred) {
  if (gt.size() != pred.size()) throw std::invalid_argument("aline_errors: frame counts differ");
  ALineErrorReport rep;
  for (size_t f = 0; f < gt.size(); ++f) {
    const ALineBoundary& g = gt[f];
    const ALineBoundary& p = pred[f];
    if (g.frame_index != p.frame_index || g.columns.size() != p.columns.size())
      throw std::invalid_argument("aline_errors: (frame, column) grids differ");
    ALineErrorReport::FrameRow row;
    row.frame_index = g.frame_index;
    double sum = 0.0;
    for (size_t c = 0; c < g.columns.size(); ++c) {
      const auto& eg = g.columns[c].d_tiss;
      const auto& ep = p.columns[c].d_tiss;
      if (eg && ep) {
        const double err = std::abs(*eg - *ep);
        sum += err;
        row.max_mm = std::max(row.max_mm, err);
        ++row.joint;
      } else if (eg) {
        ++row.gt_only;
      } else if (ep) {
        ++row.pred_only;
      }
    }
    if (row.joint > 0) row.mu_mm = sum / row.joint;
    rep.total_joint += row.joint;
    rep.total_gt_only += row.gt_only;
    rep.total_pred_only += row.pred_only;
    rep.global_max_mm = std::max(rep.global_max_mm, row.max_mm);
    rep.frames.push_back(row);
  }
  if (rep.total_joint == 0)
    throw std::domain_error("aline_errors: no column is present in both boundary sets");

  double n = 0, mu_s = 0, mu_ss = 0, mx_s = 0, mx_ss = 0;
  for (const auto& row : rep.frames) {
    if (row.joint == 0) continue;
    n += 1;
    mu_s += row.mu_mm;
    mu_ss += row.mu_mm * row.mu_mm;
    mx_s += row.max_mm;
    mx_ss += row.max_mm * row.max_mm;
  }
  rep.mu_dist_mm = mu_s / n;
  rep.max_dist_mm = mx_s / n;
  rep.mu_dist_std_mm = std::sqrt(std::max(0.0, mu_ss / n - rep.mu_dist_mm * rep.mu_dist_mm));
  rep.max_dist_std_mm = std::sqrt(std::max(0.0, mx_ss / n - rep.max_dist_mm * rep.max_dist_mm));
  return rep;
}

double joint_total_variation(const ALineBoundary& values, const ALineBoundary& reference) {
  if (values.columns.size() != reference.columns.size())
    throw std::invalid_argument("joint_total_variation: column counts differ");
  std::vector<double> d;
  for (size_t c = 0; c < values.columns.size(); ++c)
    if (values.columns[c].d_tiss && reference.columns[c].d_tiss)
      d.push_back(*values.columns[c].d_tiss);
  if (d.size() < 2) return 0.0;
  double tv = 0.0;
  for (size_t i = 0; i < d.size(); ++i) tv += std::abs(d[(i + 1) % d.size()] - d[i]);
  return tv;
}

double point_triangle_sqdist(const Point3& p, const Point3& a, const Point3& b, const Point3& c) {
  // Ericson, Real-Time Collision Detection §5.1.5 (region classification).
  const Point3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return (p - a).squared_norm();

  const Point3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return (p - b).squared_norm();

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double t = d1 / (d1 - d3);
    return (p - (a + ab * t)).squared_norm();
  }

  const Point3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return (p - c).squared_norm();

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double t = d2 / (d2 - d6);
    return (p - (a + ac * t)).squared_norm();
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double t = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + (c - b) * t)).squared_norm();
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return (p - (a + ab * v + ac * w)).squared_norm();
}

MeshDistance::MeshDistance(const TriangleMesh& mesh) : mesh_(&mesh) {
  if (mesh.triangles.empty()) throw std::invalid_argument("MeshDistance: empty mesh");
  const size_t n = mesh.triangles.size();
  order_.resize(n);
  std::vector<Point3> centroid(n);
  for (size_t i = 0; i < n; ++i) {
    order_[i] = static_cast<int>(i);
    const auto& t = mesh.triangles[i];
    centroid[i] = (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) * (1.0 / 3.0);
  }

  constexpr int kLeaf = 8;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Iterative median-split build over [begin, end) ranges of order_.
  struct Task {
    int node, begin, end;
  };
  nodes_.push_back({});
  std::vector<Task> stack{{0, 0, static_cast<int>(n)}};
  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    Node node;
    node.lo = {kInf, kInf, kInf};
    node.hi = {-kInf, -kInf, -kInf};
    for (int i = task.begin; i < task.end; ++i) {
      for (int v : mesh.triangles[order_[i]]) {
        const Point3& q = mesh.vertices[v];
        node.lo = {std::min(node.lo.x, q.x), std::min(node.lo.y, q.y), std::min(node.lo.z, q.z)};
        node.hi = {std::max(node.hi.x, q.x), std::max(node.hi.y, q.y), std::max(node.hi.z, q.z)};
      }
    }
    if (task.end - task.begin <= kLeaf) {
      node.begin = task.begin;
      node.end = task.end;
      nodes_[task.node] = node;
      continue;
    }
    Point3 clo{kInf, kInf, kInf}, chi{-kInf, -kInf, -kInf};
    for (int i = task.begin; i < task.end; ++i) {
      const Point3& q = centroid[order_[i]];
      clo = {std::min(clo.x, q.x), std::min(clo.y, q.y), std::min(clo.z, q.z)};
      chi = {std::max(chi.x, q.x), std::max(chi.y, q.y), std::max(chi.z, q.z)};
    }
    const Point3 ext = chi - clo;
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    const int mid = (task.begin + task.end) / 2;
    std::nth_element(order_.begin() + task.begin, order_.begin() + mid, order_.begin() + task.end,
                     [&](int u, int v) {
                       const Point3 &cu = centroid[u], &cv = centroid[v];
                       const double ku = axis == 0 ? cu.x : (axis == 1 ? cu.y : cu.z);
                       const double kv = axis == 0 ? cv.x : (axis == 1 ? cv.y : cv.z);
                       return ku < kv || (ku == kv && u < v);
                     });
    node.left = static_cast<int>(nodes_.size());
    node.right = node.left + 1;
    nodes_[task.node] = node;
    nodes_.push_back({});
    nodes_.push_back({});
    stack.push_back({node.left, task.begin, mid});
    stack.push_back({node.right, mid, task.end});
  }
}

double MeshDistance::sq_to_box(const Point3& p, const Node& n) const {
  const double dx = std::max({n.lo.x - p.x, 0.0, p.x - n.hi.x});
  const double dy = std::max({n.lo.y - p.y, 0.0, p.y - n.hi.y});
  const double dz = std::max({n.lo.z - p.z, 0.0, p.z - n.hi.z});
  return dx * dx + dy * dy + dz * dz;
}

double MeshDistance::distance(const Point3& p) const {
  double best = std::numeric_limits<double>::infinity();
  // Depth-first with near-child ordering; prune boxes beyond the current best.
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (sq_to_box(p, node) > best) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const auto& t = mesh_->triangles[order_[i]];
        best = std::min(best, point_triangle_sqdist(p, mesh_->vertices[t[0]],
                                                    mesh_->vertices[t[1]], mesh_->vertices[t[2]]));
      }
      continue;
    }
    const double dl = sq_to_box(p, nodes_[node.left]);
    const double dr = sq_to_box(p, nodes_[node.right]);
    if (dl <= dr) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return std::sqrt(best);
}

PointMeshReport point_to_mesh(const std::vector<Point3>& points, const TriangleMesh& mesh) {
  if (points.empty()) throw std::invalid_argument("point_to_mesh: empty point cloud");
  if (mesh.triangles.empty()) throw std::invalid_argument("point_to_mesh: empty mesh");
  MeshDistance dist(mesh);

  PointMeshReport rep;
  rep.distances.resize(points.size());
  parallel_chunks(points.size(), kNnChunk, [&](size_t, size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) rep.distances[i] = dist.distance(points[i]);
  });

  double sum = 0.0;
  for (double d : rep.distances) {
    sum += d;
    rep.max_mm = std::max(rep.max_mm, d);
  }
  rep.mean_mm = sum / double(points.size());

  std::vector<double> sorted = rep.distances;
  std::sort(sorted.begin(), sorted.end());
  auto rank = [&](double q) {
    const size_t r = static_cast<size_t>(std::ceil(q * double(sorted.size())));
    return sorted[std::min(sorted.size() - 1, r == 0 ? 0 : r - 1)];
  };
  rep.p50_mm = rank(0.50);
  rep.p90_mm = rank(0.90);
  rep.p95_mm = rank(0.95);
  rep.p99_mm = rank(0.99);
  return rep;
}

PointMeshReport point_to_mesh(const PointCloud& pc, const TriangleMesh& mesh) {
  return point_to_mesh(pc.points, mesh);
}

}  // namespace aoct
