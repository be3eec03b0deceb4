#include <doctest.h>

#include <cmath>
#include <numbers>

#include "aoct/geometry.hpp"
#include "aoct/rng.hpp"

using namespace aoct;

namespace {
ScanConfig default_cfg() { return {}; }
}  // namespace

TEST_CASE("sample_time follows the raster convention") {
  const ScanConfig cfg = default_cfg();
  CHECK(sample_time({0, 0, {}}, cfg) == 0.0);
  CHECK(sample_time({0, 1, {}}, cfg) == doctest::Approx(1.0 / 1024.0).epsilon(1e-15));
  // first column of frame k starts exactly k frame periods in
  CHECK(sample_time({3, 0, {}}, cfg) == doctest::Approx(3.0 * cfg.frame_period()).epsilon(1e-15));
  CHECK_THROWS_AS(sample_time({-1, 0, {}}, cfg), std::out_of_range);
  CHECK_THROWS_AS(sample_time({0, 1024, {}}, cfg), std::out_of_range);
  CHECK_THROWS_AS(sample_time({100, 0, {}}, cfg), std::out_of_range);
}

TEST_CASE("aline_pose advances one revolution per frame") {
  const ScanConfig cfg = default_cfg();
  const ALinePose p0 = aline_pose(0.0, cfg);
  CHECK(p0.theta == 0.0);
  CHECK(p0.z_cath == cfg.z_start);

  const ALinePose p1 = aline_pose(cfg.frame_period(), cfg);
  CHECK(p1.theta == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p1.z_cath == doctest::Approx(cfg.z_start + cfg.v_cath * cfg.frame_period()));

  // half a frame = half a revolution
  const ALinePose ph = aline_pose(cfg.frame_period() / 2, cfg);
  CHECK(ph.theta == doctest::Approx(std::numbers::pi).epsilon(1e-12));

  CHECK_THROWS_AS(aline_pose(-0.5, cfg), std::domain_error);
}

TEST_CASE("pull-back direction and theta offset") {
  ScanConfig cfg = default_cfg();
  cfg.pullback_sign = -1;
  cfg.theta_offset = 1.0;
  const ALinePose p = aline_pose(2.0, cfg);
  CHECK(p.z_cath == doctest::Approx(cfg.z_start - 2.0 * cfg.v_cath));
  CHECK(p.theta == doctest::Approx(wrap_angle(cfg.omega * 2.0 + 1.0)));
  CHECK(cfg.z_end() < cfg.z_start);
}

TEST_CASE("aline_direction matches the stated convention") {
  const ScanConfig cfg = default_cfg();
  // theta = 0 points along +y (angle measured from +y toward +x)
  const Point3 d0 = aline_direction(0.0, cfg);
  CHECK(d0.x == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(d0.y == doctest::Approx(std::sin(cfg.phi_cath)));
  CHECK(d0.z == doctest::Approx(-std::cos(cfg.phi_cath)));
  // theta = pi/2 points along +x
  const Point3 d1 = aline_direction(std::numbers::pi / 2, cfg);
  CHECK(d1.x == doctest::Approx(std::sin(cfg.phi_cath)));
  CHECK(d1.y == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(d1.norm() - 1.0) < 1e-12);
}

TEST_CASE("to_cylindrical implements Eqs. 1-2") {
  ScanConfig cfg = default_cfg();
  const double d = 2.5;
  const CylPoint c = to_cylindrical({0, 0, d}, cfg);
  CHECK(c.r_tiss == doctest::Approx(d * std::sin(cfg.phi_cath)).epsilon(1e-15));
  CHECK(c.z_tiss == doctest::Approx(cfg.z_start - d * std::cos(cfg.phi_cath)).epsilon(1e-15));
  CHECK(c.theta == 0.0);

  CHECK_THROWS_AS(to_cylindrical({0, 0, {}}, cfg), std::domain_error);
  CHECK_THROWS_AS(to_cylindrical({0, 0, -0.1}, cfg), std::domain_error);
  CHECK_THROWS_AS(to_cylindrical({0, 0, cfg.d_max + 0.1}, cfg), std::domain_error);
  CHECK_NOTHROW(to_cylindrical({0, 0, cfg.d_max}, cfg));

  SUBCASE("phi > pi/2 looks backward") {
    cfg.phi_cath = 2.0;  // cos < 0 -> z_tiss above the catheter
    const CylPoint b = to_cylindrical({0, 0, d}, cfg);
    CHECK(b.z_tiss > cfg.z_start);
  }
}

TEST_CASE("cartesian/cylindrical round trip") {
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    CylPoint c{rng.uniform(1e-3, 5.0), rng.uniform(0.0, kTwoPi - 1e-12), rng.uniform(-10, 60)};
    const CylPoint back = to_cylindrical_axis(to_cartesian(c));
    worst = std::max({worst, std::abs(back.r_tiss - c.r_tiss),
                      std::abs(wrap_angle(back.theta - c.theta + std::numbers::pi) -
                               std::numbers::pi),
                      std::abs(back.z_tiss - c.z_tiss)});
  }
  CHECK(worst < 1e-12);
  // axis point: theta defined as 0
  CHECK(to_cylindrical_axis({0, 0, 3}).theta == 0.0);
}

TEST_CASE("aline ray passes through the wall sample") {
  const ScanConfig cfg = default_cfg();
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const int f = static_cast<int>(rng.bounded(cfg.n_frames));
    const int c = static_cast<int>(rng.bounded(cfg.n_columns));
    const double d = rng.uniform(0.1, cfg.d_max);
    const ALineRay ray = aline_ray(sample_time({f, c, {}}, cfg), cfg);
    const Point3 wall = to_cartesian(to_cylindrical({f, c, d}, cfg));
    const Point3 along = ray.origin + ray.direction * d;
    CHECK((along - wall).norm() < 1e-12);
  }
}

TEST_CASE("wrap_angle") {
  CHECK(wrap_angle(0.0) == 0.0);
  CHECK(wrap_angle(kTwoPi) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(wrap_angle(-1e-18) < kTwoPi);
  CHECK(wrap_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(wrap_angle(7 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("ScanConfig validation") {
  ScanConfig cfg = default_cfg();
  CHECK_NOTHROW(cfg.validate());

  SUBCASE("phi bounds") {
    cfg.phi_cath = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.phi_cath = std::numbers::pi;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
  SUBCASE("revolution consistency") {
    cfg.omega = 6.0;  // no longer one revolution per frame
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg.omega = kTwoPi * cfg.f_samp / cfg.n_columns;
    CHECK_NOTHROW(cfg.validate());
  }
  SUBCASE("sign") {
    cfg.pullback_sign = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  }
}

TEST_CASE("normalize_intensity truncates then rescales") {
  PolarFrame f;
  f.image = Image<float>(4, 2);
  // values 0..7: mean 3.5, population sigma ~2.291
  for (int i = 0; i < 8; ++i) f.image.data[i] = static_cast<float>(i);
  const PolarFrame out = normalize_intensity(f);
  REQUIRE(!out.degenerate);
  for (float v : out.image.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  // extremes clamp to the sigma band, so several pixels saturate
  CHECK(out.image.data[0] == 0.0f);
  CHECK(out.image.data[7] == 1.0f);
  CHECK(out.image.data[1] == 0.0f);  // 1 < mean - sigma
  // interior pixels stay strictly ordered
  CHECK(out.image.data[3] < out.image.data[4]);

  SUBCASE("constant frame degenerates to zeros") {
    PolarFrame c;
    c.image = Image<float>(3, 3, 0.25f);
    const PolarFrame d = normalize_intensity(c);
    CHECK(d.degenerate);
    for (float v : d.image.data) CHECK(v == 0.0f);
  }
}
