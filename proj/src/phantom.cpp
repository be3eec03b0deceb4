#include "aoct/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "aoct/geometry.hpp"
#include "aoct/kdtree.hpp"
#include "aoct/parallel.hpp"
#include "aoct/rng.hpp"

namespace aoct {

namespace {

// Axial radius factor base*(1 - sum of Gaussian notches), no elliptic term.
double axial_radius(const Phantom& ph, double z) {
  double f = 1.0;
  for (const Stenosis& s : ph.stenoses) {
    const double a = (z - s.z0) / s.width;
    f -= s.depth * std::exp(-0.5 * a * a);
  }
  return ph.base_radius * f;
}

double axial_radius_dz(const Phantom& ph, double z) {
  double df = 0.0;
  for (const Stenosis& s : ph.stenoses) {
    const double a = (z - s.z0) / s.width;
    df += s.depth * std::exp(-0.5 * a * a) * a / s.width;
  }
  return ph.base_radius * df;
}

// Elliptic modulation: radius of an ellipse with semi-axes (1, b) at angle
// psi from the long axis, so e in [b, 1] and e == 1 for circular sections.
double elliptic_factor(const Phantom& ph, double theta) {
  if (ph.ellipticity == 1.0) return 1.0;
  const double b = ph.ellipticity;
  const double psi = theta - ph.ellipse_angle;
  const double c = std::cos(psi), s = std::sin(psi);
  return b / std::sqrt(b * b * c * c + s * s);
}

double elliptic_factor_dtheta(const Phantom& ph, double theta) {
  if (ph.ellipticity == 1.0) return 0.0;
  const double b = ph.ellipticity;
  const double psi = theta - ph.ellipse_angle;
  const double c = std::cos(psi), s = std::sin(psi);
  const double q = b * b * c * c + s * s;
  return -0.5 * b * std::pow(q, -1.5) * (1.0 - b * b) * 2.0 * s * c;
}

double radius_unchecked(const Phantom& ph, double z, double theta) {
  return axial_radius(ph, z) * elliptic_factor(ph, theta);
}

// Surface point at parameters (theta, u); angle convention x = r*sin(theta).
Point3 surface_point(const Phantom& ph, double theta, double u) {
  const double r = radius_unchecked(ph, u, theta);
  return {r * std::sin(theta), r * std::cos(theta), u};
}

double min_axial_factor(const Phantom& ph) {
  double lo = 1.0;
  const int n = 4096;
  for (int i = 0; i <= n; ++i) {
    const double z = ph.length * i / n;
    lo = std::min(lo, axial_radius(ph, z) / ph.base_radius);
  }
  return lo;
}

// Distance from p to the surface restricted to a half-plane of constant
// theta; valid on its own only for surfaces of revolution.
double profile_distance(const Phantom& ph, double r_p, double z_p, double theta) {
  const double e = elliptic_factor(ph, theta);
  auto f = [&](double u) {
    const double dr = r_p - axial_radius(ph, u) * e;
    const double dz = z_p - u;
    return dr * dr + dz * dz;
  };
  // Coarse scan, then golden-section refinement of the best cell.
  const int n = 512;
  double best_u = 0.0, best_f = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double u = ph.length * i / n;
    const double v = f(u);
    if (v < best_f) {
      best_f = v;
      best_u = u;
    }
  }
  const double h = ph.length / n;
  double a = std::max(0.0, best_u - h), b = std::min(ph.length, best_u + h);
  const double gr = 0.6180339887498949;
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < 120 && (b - a) > 1e-13 * std::max(1.0, ph.length); ++it) {
    if (f1 < f2) {
      b = x2; x2 = x1; f2 = f1;
      x1 = b - gr * (b - a);
      f1 = f(x1);
    } else {
      a = x1; x1 = x2; f1 = f2;
      x2 = a + gr * (b - a);
      f2 = f(x2);
    }
  }
  return std::sqrt(f((a + b) / 2));
}

// Gauss-Newton projection onto the general surface, coarse grid start.
double projected_distance(const Phantom& ph, const Point3& p) {
  double best = std::numeric_limits<double>::infinity();
  double th = 0.0, u = 0.0;
  const int nt = 64, nu = 96;
  for (int i = 0; i < nt; ++i) {
    const double theta = kTwoPi * i / nt;
    for (int j = 0; j <= nu; ++j) {
      const double z = ph.length * j / nu;
      const double d2 = squared_distance(p, surface_point(ph, theta, z));
      if (d2 < best) {
        best = d2;
        th = theta;
        u = z;
      }
    }
  }
  for (int it = 0; it < 80; ++it) {
    const Point3 s = surface_point(ph, th, u);
    const Point3 g{s.x - p.x, s.y - p.y, s.z - p.z};
    const double e = elliptic_factor(ph, th), de = elliptic_factor_dtheta(ph, th);
    const double rr = axial_radius(ph, u), drdu = axial_radius_dz(ph, u);
    const double sin_t = std::sin(th), cos_t = std::cos(th);
    const double r = rr * e, r_th = rr * de, r_u = drdu * e;
    const Point3 j_th{r_th * sin_t + r * cos_t, r_th * cos_t - r * sin_t, 0.0};
    const Point3 j_u{r_u * sin_t, r_u * cos_t, 1.0};
    // Normal equations for the 2x2 Gauss-Newton step.
    const double a11 = j_th.dot(j_th), a12 = j_th.dot(j_u), a22 = j_u.dot(j_u);
    const double b1 = -j_th.dot(g), b2 = -j_u.dot(g);
    const double det = a11 * a22 - a12 * a12;
    if (std::abs(det) < 1e-30) break;
    double d_th = (b1 * a22 - b2 * a12) / det;
    double d_u = (a11 * b2 - a12 * b1) / det;
    double step = 1.0;
    const double f0 = g.squared_norm();
    double f1 = f0;
    for (int bt = 0; bt < 30; ++bt) {
      const double nth = th + step * d_th;
      const double nu2 = std::clamp(u + step * d_u, 0.0, ph.length);
      f1 = squared_distance(p, surface_point(ph, nth, nu2));
      if (f1 <= f0) {
        th = nth;
        u = nu2;
        break;
      }
      step *= 0.5;
    }
    if (std::abs(step * d_th) < 1e-14 && std::abs(step * d_u) < 1e-14 * std::max(1.0, ph.length))
      break;
    if (f1 > f0) break;
  }
  return std::sqrt(squared_distance(p, surface_point(ph, th, u)));
}

}  // namespace

void Phantom::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("Phantom: " + msg); };
  if (!(base_radius > 0)) fail("base_radius must be > 0");
  if (!(length > 0)) fail("length must be > 0");
  if (!(ellipticity > 0.0 && ellipticity <= 1.0)) fail("ellipticity must lie in (0, 1]");
  for (const Stenosis& s : stenoses) {
    if (!(s.width > 0)) fail("stenosis width must be > 0");
    if (!(s.depth >= 0.0 && s.depth < 1.0)) fail("stenosis depth must lie in [0, 1)");
    if (!(s.z0 >= 0.0 && s.z0 <= length)) fail("stenosis center must lie within [0, length]");
  }
  const double min_factor = min_axial_factor(*this);
  if (!(min_factor > 0)) fail("effective radius must stay positive (stenoses too deep)");
  const double min_radius = base_radius * min_factor * ellipticity;
  if (std::hypot(offset_x, offset_y) >= min_radius)
    fail("centerline offset must be smaller than the minimum effective radius");
}

double phantom_radius(const Phantom& ph, double z, double theta) {
  if (z < 0.0 || z > ph.length)
    throw std::domain_error("phantom_radius: z outside [0, length]");
  return radius_unchecked(ph, z, theta);
}

double phantom_sdf(const Phantom& ph, const Point3& p) {
  if (!p.finite()) throw std::domain_error("phantom_sdf: non-finite point");
  const double r_p = std::hypot(p.x, p.y);
  const double theta_p = (r_p > 0) ? wrap_angle(std::atan2(p.x, p.y)) : 0.0;
  const double z_ref = std::clamp(p.z, 0.0, ph.length);
  const bool inside_lateral = r_p < radius_unchecked(ph, z_ref, theta_p);

  double lateral;
  if (ph.is_circular_tube()) {
    lateral = std::abs(r_p - ph.base_radius);
    if (p.z < 0.0 || p.z > ph.length) {
      const double dz = p.z < 0.0 ? -p.z : p.z - ph.length;
      lateral = std::hypot(r_p - ph.base_radius, dz);
    }
  } else if (ph.ellipticity == 1.0) {
    lateral = profile_distance(ph, r_p, p.z, theta_p);
  } else {
    lateral = projected_distance(ph, p);
  }

  if (!ph.capped) return inside_lateral ? -lateral : lateral;

  // Capped: the solid is the air column {r < rho, 0 < z < length}; the ends
  // contribute disk faces.
  const double dz_out = std::max(-p.z, p.z - ph.length);
  if (inside_lateral && dz_out < 0) return std::max(-lateral, dz_out);
  double d = std::numeric_limits<double>::infinity();
  if (inside_lateral) d = dz_out;  // radially inside, beyond an end: face is closest
  else if (dz_out < 0) d = lateral;
  else d = std::hypot(lateral, dz_out);
  return d;
}

std::optional<double> cast_aline(const Phantom& ph, double t, const ScanConfig& cfg) {
  const ALinePose pose = aline_pose(t, cfg);
  const Point3 origin{ph.offset_x, ph.offset_y, pose.z_cath};
  const Point3 dir = aline_direction(pose.theta, cfg);

  // Radial gap between the ray point and the wall at the point's own (z, theta);
  // negative strictly inside the lumen cross-section.
  auto gap = [&](double d) {
    const Point3 q{origin.x + d * dir.x, origin.y + d * dir.y, origin.z + d * dir.z};
    const double r = std::hypot(q.x, q.y);
    const double th = (r > 0) ? std::atan2(q.x, q.y) : pose.theta;
    const double z = std::clamp(q.z, 0.0, ph.length);
    return r - radius_unchecked(ph, z, th);
  };

  if (ph.is_circular_tube() && ph.catheter_centered()) {
    const double d = ph.base_radius / std::sin(cfg.phi_cath);
    return d <= cfg.d_max ? std::optional<double>(d) : std::nullopt;
  }

  double narrowest = ph.base_radius;
  for (const Stenosis& s : ph.stenoses) narrowest = std::min(narrowest, s.width);
  const double step =
      std::min({cfg.d_max / 512.0, narrowest / 8.0, ph.base_radius / 16.0});

  if (gap(0.0) >= 0) return std::nullopt;  // catheter outside the lumen; validated away
  double lo = 0.0, hi = 0.0;
  bool bracketed = false;
  for (double d = step; d <= cfg.d_max + step * 0.5; d += step) {
    const double dd = std::min(d, cfg.d_max);
    if (gap(dd) >= 0) {
      hi = dd;
      bracketed = true;
      break;
    }
    lo = dd;
  }
  if (!bracketed) return std::nullopt;

  for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (gap(mid) < 0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::string coverage_diagnostic(const Phantom& ph, const ScanConfig& cfg) {
  const double z_a = cfg.z_start, z_b = cfg.z_end();
  const double cos_phi = std::cos(cfg.phi_cath);
  const double lo = std::min(z_a, z_b) - std::max(cos_phi, 0.0) * cfg.d_max;
  const double hi = std::max(z_a, z_b) + std::max(-cos_phi, 0.0) * cfg.d_max;
  if (lo < 0.0 || hi > ph.length) {
    std::ostringstream os;
    os << "pull-back spans z [" << lo << ", " << hi << "] mm including beam reach, "
       << "but the phantom covers [0, " << ph.length << "] mm";
    return os.str();
  }
  return {};
}

SimulatedFrame simulate_frame(const Phantom& ph, const ScanConfig& cfg,
                              const NoiseParams& noise, uint64_t seed, int frame_index) {
  if (frame_index < 0 || frame_index >= cfg.n_frames)
    throw std::out_of_range("simulate_frame: frame_index out of range");

  SimulatedFrame out;
  out.intensity.frame_index = frame_index;
  out.intensity.image = Image<float>(cfg.n_columns, cfg.frame_height);
  out.mask.frame_index = frame_index;
  out.mask.image = Image<uint8_t>(cfg.n_columns, cfg.frame_height);
  out.boundary.frame_index = frame_index;
  out.boundary.columns.resize(cfg.n_columns);

  Rng rng(derive_seed(seed, static_cast<uint64_t>(frame_index)));
  const double px = cfg.pixel_size();

  for (int col = 0; col < cfg.n_columns; ++col) {
    const double t = sample_time({frame_index, col, std::nullopt}, cfg);
    const std::optional<double> d = cast_aline(ph, t, cfg);
    auto& entry = out.boundary.columns[col];
    entry.d_tiss = d;
    entry.source = SourceTag::mask;

    const double wall = d.value_or(std::numeric_limits<double>::infinity());
    for (int row = 0; row < cfg.frame_height; ++row) {
      out.mask.image.at(row, col) = (row * px < wall) ? 1 : 0;

      const double depth = (row + 0.5) * px;
      double v = 0.0;
      if (depth >= wall) {
        const double past_band = depth - wall - noise.band_thickness;
        v = past_band <= 0 ? 1.0 : std::exp(-past_band / noise.decay_length);
      } else if (noise.enabled) {
        v = noise.noise_floor;
      }
      if (noise.enabled) v *= std::max(0.0, 1.0 + noise.speckle_sigma * rng.normal());
      out.intensity.image.at(row, col) = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

GroundTruthScan simulate_scan(const Phantom& ph, const ScanConfig& cfg,
                              const NoiseParams& noise, uint64_t seed) {
  cfg.validate();
  ph.validate();
  const std::string coverage = coverage_diagnostic(ph, cfg);
  if (!coverage.empty()) throw std::invalid_argument("simulate_scan: " + coverage);

  GroundTruthScan scan;
  scan.phantom = ph;
  scan.cfg = cfg;
  scan.seed = seed;
  scan.frames.resize(cfg.n_frames);
  scan.masks.resize(cfg.n_frames);
  scan.boundaries.resize(cfg.n_frames);

  parallel_chunks(static_cast<size_t>(cfg.n_frames), 1, [&](size_t, size_t begin, size_t) {
    const int f = static_cast<int>(begin);
    SimulatedFrame frame = simulate_frame(ph, cfg, noise, seed, f);
    scan.frames[f] = std::move(frame.intensity);
    scan.masks[f] = std::move(frame.mask);
    scan.boundaries[f] = std::move(frame.boundary);
  });
  return scan;
}

std::vector<ALineBoundary> jitter_boundaries(const std::vector<ALineBoundary>& boundaries,
                                             const ScanConfig& cfg, double jitter_sigma_px,
                                             double dropout_rate, uint64_t seed) {
  std::vector<ALineBoundary> out = boundaries;
  const double px = cfg.pixel_size();
  for (ALineBoundary& b : out) {
    Rng rng(derive_seed(seed, 0x6a69747400000000ULL ^ static_cast<uint64_t>(b.frame_index)));
    for (auto& entry : b.columns) {
      if (!entry.d_tiss) continue;
      if (rng.uniform01() < dropout_rate) {
        entry.d_tiss.reset();
        continue;
      }
      const double d = *entry.d_tiss + rng.normal() * jitter_sigma_px * px;
      entry.d_tiss = std::clamp(d, 0.0, cfg.d_max);
    }
  }
  return out;
}

}  // namespace aoct
