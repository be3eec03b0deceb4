#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aoct/mesh.hpp"
#include "aoct/metrics.hpp"
#include "aoct/rng.hpp"

using namespace aoct;

namespace {

std::vector<Point3> random_points(size_t n, uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<Point3> pts(n);
  for (auto& p : pts)
    p = {rng.uniform(-scale, scale), rng.uniform(-scale, scale), rng.uniform(-scale, scale)};
  return pts;
}

double brute_chamfer(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  auto one_way = [](const std::vector<Point3>& from, const std::vector<Point3>& to) {
    double sum = 0.0;
    for (const Point3& p : from) {
      double best = 1e300;
      for (const Point3& q : to) best = std::min(best, (p - q).squared_norm());
      sum += best;
    }
    return sum / static_cast<double>(from.size());
  };
  return one_way(a, b) + one_way(b, a);
}

double brute_hausdorff(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  auto one_way = [](const std::vector<Point3>& from, const std::vector<Point3>& to) {
    double worst = 0.0;
    for (const Point3& p : from) {
      double best = 1e300;
      for (const Point3& q : to) best = std::min(best, (p - q).squared_norm());
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::sqrt(std::max(one_way(a, b), one_way(b, a)));
}

// Exact EMD on equal-size sets by exhausting all permutations (n <= 7).
double factorial_emd(const std::vector<Point3>& a, const std::vector<Point3>& b) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double cost = 0.0;
    for (size_t i = 0; i < a.size(); ++i) cost += (a[i] - b[perm[i]]).norm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(a.size());
}

SegmentationMask mask_from_bits(int w, int h, const std::vector<uint8_t>& bits, int frame = 0) {
  SegmentationMask m;
  m.frame_index = frame;
  m.image = Image<uint8_t>(w, h);
  m.image.data = bits;
  return m;
}

ALineBoundary boundary_of(int frame, const std::vector<std::optional<double>>& ds) {
  ALineBoundary b;
  b.frame_index = frame;
  for (const auto& d : ds) {
    ALineBoundary::Entry e;
    e.d_tiss = d;
    b.columns.push_back(e);
  }
  return b;
}

}  // namespace

TEST_CASE("dice on hand counts and edge cases") {
  // 2x2: a = {1,1,0,0}, b = {1,0,1,0} -> |A|=2, |B|=2, |A∩B|=1 -> 2/4
  const auto a = mask_from_bits(2, 2, {1, 1, 0, 0});
  const auto b = mask_from_bits(2, 2, {1, 0, 1, 0});
  CHECK(dice(a, b) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(dice(a, a) == 1.0);

  const auto empty = mask_from_bits(2, 2, {0, 0, 0, 0});
  CHECK(dice(empty, empty) == 1.0);
  CHECK(dice(a, empty) == 0.0);

  // any nonzero value is foreground
  const auto gray = mask_from_bits(2, 2, {7, 255, 0, 0});
  CHECK(dice(a, gray) == 1.0);

  const auto wide = mask_from_bits(4, 1, {1, 1, 0, 0});
  CHECK_THROWS_AS(dice(a, wide), std::invalid_argument);
}

TEST_CASE("chamfer and hausdorff equal brute force on 200 random instances") {
  Rng sizes(1234);
  for (int inst = 0; inst < 200; ++inst) {
    const size_t na = 1 + sizes.bounded(64), nb = 1 + sizes.bounded(64);
    const auto a = random_points(na, 5000 + inst * 2);
    const auto b = random_points(nb, 5001 + inst * 2);
    CHECK(chamfer(a, b) == brute_chamfer(a, b));
    CHECK(hausdorff(a, b) == brute_hausdorff(a, b));
  }
}

TEST_CASE("chamfer/hausdorff identities") {
  const auto a = random_points(50, 7);
  CHECK(chamfer(a, a) == 0.0);
  CHECK(hausdorff(a, a) == 0.0);
  // symmetry
  const auto b = random_points(30, 8);
  CHECK(chamfer(a, b) == chamfer(b, a));
  CHECK(hausdorff(a, b) == hausdorff(b, a));
  // two single points: both reduce to the (squared) distance
  const std::vector<Point3> p{{0, 0, 0}}, q{{3, 4, 0}};
  CHECK(chamfer(p, q) == doctest::Approx(50.0).epsilon(1e-15));  // 25 + 25
  CHECK(hausdorff(p, q) == doctest::Approx(5.0).epsilon(1e-15));
  CHECK_THROWS_AS(chamfer({}, a), std::invalid_argument);
  CHECK_THROWS_AS(hausdorff(a, {}), std::invalid_argument);
}

TEST_CASE("translation moves hausdorff by at most the shift") {
  const auto a = random_points(40, 9);
  auto shifted = a;
  for (Point3& p : shifted) p = p + Point3{0.3, 0, 0};
  CHECK(hausdorff(a, shifted) <= 0.3 + 1e-12);
  CHECK(chamfer(a, shifted) <= 2 * 0.09 + 1e-12);
}

TEST_CASE("solve_assignment on hand matrices") {
  CHECK(solve_assignment({{1.0}}) == std::vector<int>{0});
  // classic: diagonal is optimal
  const std::vector<std::vector<double>> cost{{1, 100, 100}, {100, 1, 100}, {100, 100, 1}};
  CHECK(solve_assignment(cost) == std::vector<int>{0, 1, 2});
  // anti-diagonal optimal
  const std::vector<std::vector<double>> anti{{9, 9, 1}, {9, 1, 9}, {1, 9, 9}};
  CHECK(solve_assignment(anti) == std::vector<int>{2, 1, 0});
  // a matrix where greedy row-wise choice is suboptimal:
  // greedy picks (0,0)=1 then (1,1)=5; optimal is (0,1)+(1,0) = 2+2 = 4
  const std::vector<std::vector<double>> tricky{{1, 2}, {2, 5}};
  const auto assign = solve_assignment(tricky);
  CHECK(assign == std::vector<int>{1, 0});
}

TEST_CASE("assignment cost is minimal against all permutations (n <= 6)") {
  Rng rng(77);
  for (int inst = 0; inst < 40; ++inst) {
    const int n = 2 + static_cast<int>(rng.bounded(5));
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    for (auto& row : cost)
      for (double& c : row) c = rng.uniform(0, 10);

    const auto assign = solve_assignment(cost);
    double got = 0.0;
    std::vector<bool> used(n, false);
    for (int r = 0; r < n; ++r) {
      REQUIRE(assign[r] >= 0);
      REQUIRE(assign[r] < n);
      CHECK_FALSE(used[assign[r]]);
      used[assign[r]] = true;
      got += cost[r][assign[r]];
    }

    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
      double c = 0.0;
      for (int r = 0; r < n; ++r) c += cost[r][perm[r]];
      best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(got == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("emd equals the factorial optimum on small equal sets") {
  Rng sizes(55);
  for (int inst = 0; inst < 25; ++inst) {
    const size_t n = 2 + sizes.bounded(6);  // 2..7
    const auto a = random_points(n, 9000 + inst * 2);
    const auto b = random_points(n, 9001 + inst * 2);
    // equal sizes under the cap: no subsampling, exact assignment
    CHECK(emd(a, b, 1, 64) == doctest::Approx(factorial_emd(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("emd identities: self distance, symmetry, translation") {
  const auto a = random_points(120, 31);
  CHECK(emd(a, a, 7) == 0.0);  // identical content hash -> same subsample

  const auto b = random_points(90, 32);
  // content-keyed streams make the subsample symmetric; the matched pairs are
  // identical and only the summation order differs between the two calls
  CHECK(emd(a, b, 7) == doctest::Approx(emd(b, a, 7)).epsilon(1e-13));
  CHECK(emd(a, b, 7) == emd(a, b, 7));

  // a translated singleton pair: emd is the shift
  const std::vector<Point3> p{{1, 1, 1}}, q{{1, 1, 3.5}};
  CHECK(emd(p, q, 0) == doctest::Approx(2.5).epsilon(1e-15));

  // caps bite: still finite, deterministic, and >= 0
  const auto big = random_points(600, 33);
  const auto big2 = random_points(500, 34);
  const double v = emd(big, big2, 11, 128);
  CHECK(v == emd(big, big2, 11, 128));
  CHECK(v > 0.0);
}

TEST_CASE("aline_errors per-frame aggregation on a hand example") {
  // frame 0: joint columns err {0.1, 0.3} -> mu 0.2, max 0.3; one gt-only
  // frame 1: joint column err {0.5}       -> mu 0.5, max 0.5; one pred-only
  const std::vector<ALineBoundary> gt{
      boundary_of(0, {0.9, 1.2, 2.0}),
      boundary_of(1, {1.0, std::nullopt, 3.0}),
  };
  const std::vector<ALineBoundary> pred{
      boundary_of(0, {1.0, 1.5, std::nullopt}),
      boundary_of(1, {1.5, 2.0, std::nullopt}),
  };
  const ALineErrorReport rep = aline_errors(gt, pred);
  REQUIRE(rep.frames.size() == 2);
  CHECK(rep.frames[0].joint == 2);
  CHECK(rep.frames[0].gt_only == 1);
  CHECK(rep.frames[0].pred_only == 0);
  CHECK(rep.frames[0].mu_mm == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(rep.frames[0].max_mm == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(rep.frames[1].joint == 1);
  CHECK(rep.frames[1].gt_only == 1);
  CHECK(rep.frames[1].pred_only == 1);
  CHECK(rep.frames[1].mu_mm == doctest::Approx(0.5).epsilon(1e-12));

  CHECK(rep.mu_dist_mm == doctest::Approx(0.35).epsilon(1e-12));  // mean(0.2, 0.5)
  CHECK(rep.mu_dist_std_mm == doctest::Approx(0.15).epsilon(1e-12));  // population std
  CHECK(rep.max_dist_mm == doctest::Approx(0.4).epsilon(1e-12));      // mean(0.3, 0.5)
  CHECK(rep.global_max_mm == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.total_joint == 3);
  CHECK(rep.total_gt_only == 2);
  CHECK(rep.total_pred_only == 1);
}

TEST_CASE("aline_errors rejects mismatched grids and empty intersections") {
  const std::vector<ALineBoundary> gt{boundary_of(0, {1.0, 2.0})};
  const std::vector<ALineBoundary> other_frame{boundary_of(1, {1.0, 2.0})};
  CHECK_THROWS_AS(aline_errors(gt, other_frame), std::invalid_argument);
  const std::vector<ALineBoundary> short_cols{boundary_of(0, {1.0})};
  CHECK_THROWS_AS(aline_errors(gt, short_cols), std::invalid_argument);
  const std::vector<ALineBoundary> disjoint{boundary_of(0, {std::nullopt, std::nullopt})};
  CHECK_THROWS_AS(aline_errors(gt, disjoint), std::domain_error);

  // frames without joint columns are excluded from the mean, not zero-filled
  const std::vector<ALineBoundary> gt2{boundary_of(0, {1.0, 1.0}),
                                       boundary_of(1, {std::nullopt, 1.0})};
  const std::vector<ALineBoundary> pred2{boundary_of(0, {1.25, 1.25}),
                                         boundary_of(1, {1.0, std::nullopt})};
  const ALineErrorReport rep = aline_errors(gt2, pred2);
  CHECK(rep.mu_dist_mm == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(rep.frames[1].joint == 0);
}

TEST_CASE("joint_total_variation is circular and joint-masked") {
  // d values 1, 2, 4 on a circle: |2-1| + |4-2| + |1-4| = 6
  const ALineBoundary v = boundary_of(0, {1.0, 2.0, 4.0});
  CHECK(joint_total_variation(v, v) == doctest::Approx(6.0).epsilon(1e-12));

  // reference masks out the middle column: |4-1| + |1-4| = 6 over {1, 4}
  const ALineBoundary ref = boundary_of(0, {9.0, std::nullopt, 9.0});
  CHECK(joint_total_variation(v, ref) == doctest::Approx(6.0).epsilon(1e-12));

  // fewer than 2 joint columns: zero
  const ALineBoundary one = boundary_of(0, {9.0, std::nullopt, std::nullopt});
  CHECK(joint_total_variation(v, one) == 0.0);

  // a smooth profile has lower TV than a jagged one on the same support
  const ALineBoundary smooth = boundary_of(0, {1.0, 1.1, 1.2, 1.1});
  const ALineBoundary jagged = boundary_of(0, {1.0, 1.4, 0.9, 1.5});
  CHECK(joint_total_variation(smooth, smooth) < joint_total_variation(jagged, jagged));
}

TEST_CASE("point_triangle_sqdist against an independent construction") {
  Rng rng(808);
  for (int inst = 0; inst < 300; ++inst) {
    const Point3 a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Point3 b{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Point3 c{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const Point3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};

    // independent oracle: dense barycentric sampling of the triangle
    double best = 1e300;
    const int kGrid = 120;
    for (int i = 0; i <= kGrid; ++i) {
      for (int j = 0; j <= kGrid - i; ++j) {
        const double u = static_cast<double>(i) / kGrid, w = static_cast<double>(j) / kGrid;
        const Point3 q = a * (1 - u - w) + b * u + c * w;
        best = std::min(best, (p - q).squared_norm());
      }
    }
    const double got = point_triangle_sqdist(p, a, b, c);
    CHECK(got <= best + 1e-12);          // exact result can only be closer
    CHECK(got >= best - 0.01);           // dense sampling comes close
  }

  // closed-form cases
  CHECK(point_triangle_sqdist({0, 0, 1}, {0, 0, 0}, {1, 0, 0}, {0, 1, 0}) ==
        doctest::Approx(1.0).epsilon(1e-15));  // above the face
  CHECK(point_triangle_sqdist({-1, -1, 0}, {0, 0, 0}, {1, 0, 0}, {0, 1, 0}) ==
        doctest::Approx(2.0).epsilon(1e-15));  // nearest at vertex a
  CHECK(point_triangle_sqdist({0.5, -3, 0}, {0, 0, 0}, {1, 0, 0}, {0, 1, 0}) ==
        doctest::Approx(9.0).epsilon(1e-15));  // nearest on edge ab
}

TEST_CASE("MeshDistance equals brute-force minimization exactly") {
  TriangleMesh mesh;
  Rng rng(909);
  for (int i = 0; i < 120; ++i) {
    const int base = static_cast<int>(mesh.vertices.size());
    for (int k = 0; k < 3; ++k)
      mesh.vertices.push_back({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    mesh.triangles.push_back({base, base + 1, base + 2});
  }
  const MeshDistance accel(mesh);
  for (int q = 0; q < 200; ++q) {
    const Point3 p{rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)};
    double best = 1e300;
    for (const auto& tri : mesh.triangles)
      best = std::min(best, point_triangle_sqdist(p, mesh.vertices[tri[0]],
                                                  mesh.vertices[tri[1]], mesh.vertices[tri[2]]));
    CHECK(accel.distance(p) == std::sqrt(best));
  }
}

TEST_CASE("point_to_mesh report: unit-square example and percentiles") {
  // two triangles tile the unit square in the z = 0 plane
  TriangleMesh mesh;
  mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  mesh.triangles = {{0, 1, 2}, {0, 2, 3}};

  std::vector<Point3> pts;
  for (int i = 0; i < 99; ++i) pts.push_back({0.5, 0.5, 0.01 * (i + 1)});
  const PointMeshReport rep = point_to_mesh(pts, mesh);
  REQUIRE(rep.distances.size() == 99);
  CHECK(rep.distances[0] == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(rep.max_mm == doctest::Approx(0.99).epsilon(1e-12));
  CHECK(rep.mean_mm == doctest::Approx(0.5).epsilon(1e-12));
  // nearest-rank percentiles on 99 sorted values 0.01..0.99
  CHECK(rep.p50_mm == doctest::Approx(0.50).epsilon(1e-12));
  CHECK(rep.p90_mm == doctest::Approx(0.90).epsilon(1e-12));
  CHECK(rep.p95_mm == doctest::Approx(0.95).epsilon(1e-12));
  CHECK(rep.p99_mm == doctest::Approx(0.99).epsilon(1e-12));

  // off-surface lateral point: plane distance via the edge
  const PointMeshReport side = point_to_mesh(std::vector<Point3>{{2.0, 0.5, 0.0}}, mesh);
  CHECK(side.mean_mm == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(point_to_mesh(std::vector<Point3>{}, mesh), std::invalid_argument);
  CHECK_THROWS_AS(point_to_mesh(pts, TriangleMesh{}), std::invalid_argument);
}

TEST_CASE("point_to_mesh accepts the PointCloud overload") {
  TriangleMesh mesh;
  mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  mesh.triangles = {{0, 1, 2}};
  PointCloud pc;
  pc.points = {{0.2, 0.2, 0.5}, {0.2, 0.2, -0.25}};
  pc.provenance.resize(2);
  const PointMeshReport rep = point_to_mesh(pc, mesh);
  CHECK(rep.distances[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rep.distances[1] == doctest::Approx(0.25).epsilon(1e-12));
}
