#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "aoct/mesh.hpp"
#include "aoct/rng.hpp"

using namespace aoct;

namespace {

AnalyticField sphere_field(double radius = 1.0, Point3 center = {}) {
  return AnalyticField([=](const Point3& p) { return (p - center).norm() - radius; });
}

GridSpec cube_grid(int n, double half = 1.5) {
  GridSpec g;
  g.nx = g.ny = g.nz = n;
  g.lo = {-half, -half, -half};
  g.hi = {half, half, half};
  return g;
}

// Every undirected edge borders exactly two triangles, each directed edge
// appears once (consistent orientation).
bool watertight(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> undirected;
  std::set<std::pair<int, int>> directed;
  for (const auto& tri : mesh.triangles) {
    for (int i = 0; i < 3; ++i) {
      const int a = tri[i], b = tri[(i + 1) % 3];
      if (!directed.insert({a, b}).second) return false;
      undirected[{std::min(a, b), std::max(a, b)}]++;
    }
  }
  for (const auto& [edge, count] : undirected)
    if (count != 2) return false;
  return true;
}

double signed_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& tri : mesh.triangles) {
    const Point3 &a = mesh.vertices[tri[0]], &b = mesh.vertices[tri[1]],
                 &c = mesh.vertices[tri[2]];
    v += a.dot(cross(b, c)) / 6.0;
  }
  return v;
}

}  // namespace

TEST_CASE("grid validation") {
  CHECK_NOTHROW(cube_grid(8).validate());
  GridSpec g = cube_grid(7);
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
  g = cube_grid(16);
  g.hi.z = g.lo.z;
  CHECK_THROWS_AS(g.validate(), std::invalid_argument);
}

TEST_CASE("marching cubes on a sphere: watertight, oriented outward, right size") {
  const AnalyticField field = sphere_field();
  TriangleMesh mesh = extract_mesh(field, cube_grid(64));
  compute_normals(mesh);
  REQUIRE(!mesh.empty());
  CHECK(watertight(mesh));

  // Euler characteristic of a sphere: V - E + F = 2
  std::set<std::pair<int, int>> edges;
  for (const auto& tri : mesh.triangles)
    for (int i = 0; i < 3; ++i)
      edges.insert({std::min(tri[i], tri[(i + 1) % 3]), std::max(tri[i], tri[(i + 1) % 3])});
  const long euler = static_cast<long>(mesh.vertices.size()) - static_cast<long>(edges.size()) +
                     static_cast<long>(mesh.triangles.size());
  CHECK(euler == 2);

  // positive signed volume = outward orientation; value ~ 4*pi/3
  const double vol = signed_volume(mesh);
  CHECK(vol > 0.0);
  CHECK(vol == doctest::Approx(4.0 * std::numbers::pi / 3.0).epsilon(0.01));

  // vertices sit on the zero level within interpolation error
  const double diag = cube_grid(64).cell_diagonal();
  double worst = 0.0;
  for (const Point3& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - 1.0));
  CHECK(worst < diag * diag);  // linear interpolation: O(h^2) on a smooth field

  // normals exist, unit length, radial
  REQUIRE(mesh.normals.size() == mesh.vertices.size());
  for (size_t i = 0; i < mesh.vertices.size(); i += 97) {
    const Point3& n = mesh.normals[i];
    CHECK(n.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(n.dot(mesh.vertices[i] * (1.0 / mesh.vertices[i].norm())) > 0.99);
  }
}

TEST_CASE("refining the grid shrinks the surface error") {
  const AnalyticField field = sphere_field();
  double prev = 1e300;
  for (int n : {16, 32, 64}) {
    const TriangleMesh mesh = extract_mesh(field, cube_grid(n));
    double worst = 0.0;
    for (const Point3& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - 1.0));
    CHECK(worst < prev);
    prev = worst;
  }
}

TEST_CASE("field values at mesh vertices are below the cell-diagonal scale") {
  // a mildly anisotropic analytic field
  const AnalyticField field(
      [](const Point3& p) { return std::sqrt(p.x * p.x + 2 * p.y * p.y + p.z * p.z) - 0.8; });
  const GridSpec grid = cube_grid(48);
  const TriangleMesh mesh = extract_mesh(field, grid);
  REQUIRE(!mesh.empty());
  const double bound = grid.cell_diagonal();  // Lipschitz constant ~ sqrt(2)
  for (const Point3& v : mesh.vertices) CHECK(std::abs(field.value(v)) < bound);
}

TEST_CASE("a field without a crossing throws") {
  const AnalyticField positive([](const Point3&) { return 2.0; });
  CHECK_THROWS_AS(extract_mesh(positive, cube_grid(16)), std::runtime_error);
  const AnalyticField negative([](const Point3&) { return -1.0; });
  CHECK_THROWS_AS(extract_mesh(negative, cube_grid(16)), std::runtime_error);
}

TEST_CASE("an off-center sphere partially outside the grid still meshes") {
  const AnalyticField field = sphere_field(1.0, {1.0, 0, 0});
  const TriangleMesh mesh = extract_mesh(field, cube_grid(32));
  REQUIRE(!mesh.empty());
  // open surface at the grid boundary: not watertight, but all vertices near the level set
  for (const Point3& v : mesh.vertices)
    CHECK(std::abs((v - Point3{1.0, 0, 0}).norm() - 1.0) < 0.02);
}

TEST_CASE("sample_mesh_points is deterministic, on-surface, area-uniform") {
  const TriangleMesh mesh = extract_mesh(sphere_field(), cube_grid(48));
  const auto a = sample_mesh_points(mesh, 5000, 9);
  const auto b = sample_mesh_points(mesh, 5000, 9);
  const auto c = sample_mesh_points(mesh, 5000, 10);
  REQUIRE(a.size() == 5000);
  bool same = true, diff = false;
  for (size_t i = 0; i < a.size(); ++i) {
    same = same && (a[i] - b[i]).norm() == 0.0;
    diff = diff || (a[i] - c[i]).norm() != 0.0;
  }
  CHECK(same);
  CHECK(diff);

  Point3 mean{};
  for (const Point3& p : a) {
    CHECK(std::abs(p.norm() - 1.0) < 0.01);  // on the mesh, hence near the sphere
    mean = mean + p * (1.0 / 5000);
  }
  CHECK(mean.norm() < 0.05);  // uniform coverage has a near-zero centroid
}

TEST_CASE("meshing a trained-shaped model maps to mm and honors the z-crop") {
  // Hand-built exact model: relu net computing f(q) = |q.z| - 0.5 in unit
  // space. Its level set is the two planes z = +-0.5, which map to mm planes
  // z = 30 +- 2.5 under the transform below -- exact targets for the checks.
  MlpArch arch;
  arch.hidden_width = 4;
  arch.hidden_layers = 1;
  arch.skip_layer = -1;
  arch.activation = Activation::relu;
  MlpNet<double> net(arch);
  net.w[0].setZero();
  net.w[0](0, 2) = 1.0;
  net.w[0](1, 2) = -1.0;
  net.b[0].setZero();
  net.w[1].setZero();
  net.w[1](0, 0) = 1.0;
  net.w[1](0, 1) = 1.0;
  net.b[1](0) = -0.5;
  MlpSdf sdf{std::move(net), UnitTransform{{10.0, -4.0, 30.0}, 5.0}};

  CHECK(sdf.eval_mm({10.0, -4.0, 31.0}) == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(sdf.eval_mm({0.0, 0.0, 34.0}) == doctest::Approx(1.5).epsilon(1e-12));

  GridSpec grid = cube_grid(48, 1.0);
  const TriangleMesh mesh = extract_mesh(sdf, grid);
  REQUIRE(!mesh.empty());
  // every vertex sits on one of the two mm planes (linear field, so the edge
  // interpolation is exact up to f32 evaluation noise)
  for (const Point3& v : mesh.vertices)
    CHECK(std::min(std::abs(v.z - 27.5), std::abs(v.z - 32.5)) < 1e-4);

  // crop away the lower plane; the survivors all sit on the upper one
  const TriangleMesh cropped = extract_mesh(sdf, grid, std::make_pair(30.0, 40.0));
  REQUIRE(!cropped.empty());
  for (const Point3& v : cropped.vertices) CHECK(std::abs(v.z - 32.5) < 1e-4);
  CHECK(cropped.vertices.size() < mesh.vertices.size());

  // a crop that misses the grid entirely is a usage error
  CHECK_THROWS_AS(extract_mesh(sdf, grid, std::make_pair(50.0, 60.0)), std::invalid_argument);
  // one inside the grid but past the surface has no crossing
  CHECK_THROWS_AS(extract_mesh(sdf, grid, std::make_pair(34.5, 35.0)), std::runtime_error);
}

TEST_CASE("MlpField batched values match scalar evaluation") {
  MlpArch arch;
  arch.hidden_width = 32;
  arch.hidden_layers = 3;
  arch.skip_layer = 1;
  MlpNet<double> net(arch);
  net.init_geometric(21, 0.5);
  const MlpSdf sdf{std::move(net), UnitTransform{{1, 2, 3}, 2.0}};
  const MlpField field(sdf);

  Rng rng(22);
  std::vector<Point3> pts;
  for (int i = 0; i < 300; ++i)
    pts.push_back({1 + rng.uniform(-2, 2), 2 + rng.uniform(-2, 2), 3 + rng.uniform(-2, 2)});
  std::vector<double> batched;
  field.values(pts, batched);
  REQUIRE(batched.size() == pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    // scalar and batched paths take different Eigen kernels; they agree to
    // float rounding, not bitwise
    CHECK(std::abs(field.value(pts[i]) - batched[i]) < 1e-5);
    // f32 evaluation tracks the f64 model to float precision
    CHECK(std::abs(batched[i] - sdf.eval_mm(pts[i])) < 1e-4);
  }
}
