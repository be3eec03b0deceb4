#include "aoct/mesh.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "aoct/rng.hpp"

namespace aoct {

void GridSpec::validate() const {
  if (nx < 8 || ny < 8 || nz < 8)
    throw std::invalid_argument("GridSpec: resolution must be >= 8 per axis");
  if (!(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z))
    throw std::invalid_argument("GridSpec: bounds are degenerate");
}

void SdfField::values(const std::vector<Point3>& pts, std::vector<double>& out) const {
  out.resize(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) out[i] = value(pts[i]);
}

MlpField::MlpField(const MlpSdf& sdf) : sdf_(&sdf), fnet_(sdf.net.cast<float>()) {}

double MlpField::value(const Point3& p) const {
  const Point3 q = sdf_->transform.to_unit(p);
  return double(fnet_.eval(q)) * sdf_->transform.scale;
}

void MlpField::values(const std::vector<Point3>& pts, std::vector<double>& out) const {
  constexpr size_t kBlock = 8192;
  out.resize(pts.size());
  MlpNet<float>::Matrix q;
  MlpNet<float>::Vector v;
  for (size_t begin = 0; begin < pts.size(); begin += kBlock) {
    const size_t n = std::min(kBlock, pts.size() - begin);
    q.resize(3, n);
    for (size_t i = 0; i < n; ++i) {
      const Point3 u = sdf_->transform.to_unit(pts[begin + i]);
      q(0, i) = float(u.x);
      q(1, i) = float(u.y);
      q(2, i) = float(u.z);
    }
    fnet_.eval_batch(q, v);
    for (size_t i = 0; i < n; ++i) out[begin + i] = double(v(i)) * sdf_->transform.scale;
  }
}

namespace {

// Corner offsets and edge endpoints of the classic cube numbering.
constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

struct ValueGrid {
  std::vector<float> v;
  int nx, ny, nz;
  float at(int x, int y, int z) const {
    return v[(static_cast<size_t>(z) * ny + y) * nx + x];
  }
};

}  // namespace

TriangleMesh extract_mesh(const SdfField& field, const GridSpec& grid) {
  grid.validate();
  const int nx = grid.nx, ny = grid.ny, nz = grid.nz;
  const Point3 cs = grid.cell_size();

  ValueGrid vg{std::vector<float>(static_cast<size_t>(nx) * ny * nz), nx, ny, nz};
  {
    std::vector<Point3> plane(static_cast<size_t>(nx) * ny);
    std::vector<double> vals;
    for (int z = 0; z < nz; ++z) {
      for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x)
          plane[static_cast<size_t>(y) * nx + x] = {grid.lo.x + x * cs.x, grid.lo.y + y * cs.y,
                                                    grid.lo.z + z * cs.z};
      field.values(plane, vals);
      for (size_t i = 0; i < plane.size(); ++i)
        vg.v[static_cast<size_t>(z) * nx * ny + i] = float(vals[i]);
    }
  }
  bool any_neg = false, any_pos = false;
  for (float f : vg.v) {
    any_neg |= f < 0.0f;
    any_pos |= f >= 0.0f;
  }
  if (!any_neg || !any_pos)
    throw std::runtime_error("extract_mesh: field has no zero crossing inside the grid");

  TriangleMesh mesh;
  // Shared vertices: one per crossing grid edge, keyed by (point id, axis).
  std::unordered_map<uint64_t, int> edge_vertex;
  auto point_id = [&](int x, int y, int z) {
    return (static_cast<uint64_t>(z) * ny + y) * nx + x;
  };
  auto vertex_on_edge = [&](int x1, int y1, int z1, int x2, int y2, int z2) {
    int axis = x2 != x1 ? 0 : (y2 != y1 ? 1 : 2);
    if (x2 < x1 || y2 < y1 || z2 < z1) {
      std::swap(x1, x2);
      std::swap(y1, y2);
      std::swap(z1, z2);
    }
    const uint64_t key = (point_id(x1, y1, z1) << 2) | static_cast<uint64_t>(axis);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;

    const double v1 = vg.at(x1, y1, z1), v2 = vg.at(x2, y2, z2);
    double t = v1 == v2 ? 0.5 : v1 / (v1 - v2);
    t = std::clamp(t, 0.0, 1.0);
    const Point3 p1{grid.lo.x + x1 * cs.x, grid.lo.y + y1 * cs.y, grid.lo.z + z1 * cs.z};
    const Point3 p2{grid.lo.x + x2 * cs.x, grid.lo.y + y2 * cs.y, grid.lo.z + z2 * cs.z};
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(p1 + (p2 - p1) * t);
    edge_vertex.emplace(key, id);
    return id;
  };

  for (int z = 0; z + 1 < nz; ++z) {
    for (int y = 0; y + 1 < ny; ++y) {
      for (int x = 0; x + 1 < nx; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c)
          if (vg.at(x + kCorner[c][0], y + kCorner[c][1], z + kCorner[c][2]) < 0.0f)
            cube |= 1 << c;
        if (mc_tables::edge_table[cube] == 0) continue;

        int ev[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mc_tables::edge_table[cube] & (1 << e))) continue;
          const int a = kEdge[e][0], b = kEdge[e][1];
          ev[e] = vertex_on_edge(x + kCorner[a][0], y + kCorner[a][1], z + kCorner[a][2],
                                 x + kCorner[b][0], y + kCorner[b][1], z + kCorner[b][2]);
        }
        const int8_t* tri = mc_tables::tri_table[cube];
        for (int i = 0; tri[i] != -1; i += 3) {
          // reversed winding: face normals point toward f > 0 (into the wall)
          const std::array<int, 3> t{ev[tri[i]], ev[tri[i + 2]], ev[tri[i + 1]]};
          if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) continue;
          const Point3 n = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                                 mesh.vertices[t[2]] - mesh.vertices[t[0]]);
          if (0.5 * n.norm() <= 1e-12) continue;  // degenerate sliver
          mesh.triangles.push_back(t);
        }
      }
    }
  }
  if (mesh.triangles.empty())
    throw std::runtime_error("extract_mesh: no zero crossing inside the grid");
  return mesh;
}

TriangleMesh extract_mesh(const MlpSdf& sdf, const GridSpec& grid,
                          std::optional<std::pair<double, double>> z_crop_mm) {
  GridSpec g = grid;
  if (z_crop_mm) {
    const double lo_u = (z_crop_mm->first - sdf.transform.center.z) / sdf.transform.scale;
    const double hi_u = (z_crop_mm->second - sdf.transform.center.z) / sdf.transform.scale;
    g.lo.z = std::max(g.lo.z, std::min(lo_u, hi_u));
    g.hi.z = std::min(g.hi.z, std::max(lo_u, hi_u));
    if (!(g.lo.z < g.hi.z))
      throw std::invalid_argument("extract_mesh: z-crop does not intersect the grid");
  }

  // Sample in unit space, then map vertices to mm.
  struct UnitField : SdfField {
    const MlpNet<float>* net;
    double value(const Point3& p) const override { return double(net->eval(p)); }
    void values(const std::vector<Point3>& pts, std::vector<double>& out) const override {
      constexpr size_t kBlock = 8192;
      out.resize(pts.size());
      MlpNet<float>::Matrix q;
      MlpNet<float>::Vector v;
      for (size_t begin = 0; begin < pts.size(); begin += kBlock) {
        const size_t n = std::min(kBlock, pts.size() - begin);
        q.resize(3, n);
        for (size_t i = 0; i < n; ++i) {
          q(0, i) = float(pts[begin + i].x);
          q(1, i) = float(pts[begin + i].y);
          q(2, i) = float(pts[begin + i].z);
        }
        net->eval_batch(q, v);
        for (size_t i = 0; i < n; ++i) out[begin + i] = double(v(i));
      }
    }
  };
  const MlpNet<float> fnet = sdf.net.cast<float>();
  UnitField uf;
  uf.net = &fnet;
  TriangleMesh mesh = extract_mesh(static_cast<const SdfField&>(uf), g);
  for (Point3& v : mesh.vertices) v = sdf.transform.to_world(v);
  compute_normals(mesh);
  return mesh;
}

void compute_normals(TriangleMesh& mesh) {
  mesh.normals.assign(mesh.vertices.size(), Point3{});
  for (const auto& t : mesh.triangles) {
    const Point3 n = cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                           mesh.vertices[t[2]] - mesh.vertices[t[0]]);
    for (int i = 0; i < 3; ++i) mesh.normals[t[i]] = mesh.normals[t[i]] + n;
  }
  for (Point3& n : mesh.normals) {
    const double len = n.norm();
    if (len > 0) n = n * (1.0 / len);
  }
}

std::vector<Point3> sample_mesh_points(const TriangleMesh& mesh, size_t count, uint64_t seed) {
  if (mesh.triangles.empty()) throw std::domain_error("sample_mesh_points: empty mesh");
  std::vector<double> cum(mesh.triangles.size());
  double total = 0.0;
  for (size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    total += 0.5 * cross(mesh.vertices[t[1]] - mesh.vertices[t[0]],
                         mesh.vertices[t[2]] - mesh.vertices[t[0]])
                       .norm();
    cum[i] = total;
  }
  if (!(total > 0)) throw std::domain_error("sample_mesh_points: zero-area mesh");

  Rng rng(seed);
  std::vector<Point3> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const double u = rng.uniform01() * total;
    const size_t tri = std::lower_bound(cum.begin(), cum.end(), u) - cum.begin();
    const auto& t = mesh.triangles[std::min(tri, mesh.triangles.size() - 1)];
    double r1 = rng.uniform01(), r2 = rng.uniform01();
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const Point3& a = mesh.vertices[t[0]];
    out.push_back(a + (mesh.vertices[t[1]] - a) * r1 + (mesh.vertices[t[2]] - a) * r2);
  }
  return out;
}

}  // namespace aoct
