#include <cmath>
#include <vector>

#include "aoct/geometry.hpp"
#include "aoct/mesh.hpp"

namespace aoct {

namespace {

// One sphere-traced ray, advanced by one field evaluation at a time so a
// batch driver can interleave many rays. March steps by |f|; the first sign
// change brackets the wall and switches to bisection.
struct RayState {
  double d = 0.0;  // next eval position along the ray
  double prev_d = 0.0, prev_f = 0.0;
  bool have_prev = false;
  double lo = 0.0, hi = 0.0, flo = 0.0;
  bool bisect = false;
  int steps = 0;
  bool done = false;
  std::optional<double> hit;

  void observe(double f, const RaycastParams& p) {
    ++steps;
    if (std::abs(f) < p.eps_hit) {
      hit = d;
      done = true;
      return;
    }
    if (bisect) {
      if ((f < 0.0) == (flo < 0.0)) {
        lo = d;
        flo = f;
      } else {
        hi = d;
      }
      if (hi - lo < 1e-9) {  // bracket collapsed; the crossing is here
        hit = 0.5 * (lo + hi);
        done = true;
        return;
      }
      d = 0.5 * (lo + hi);
    } else {
      if (have_prev && (f < 0.0) != (prev_f < 0.0)) {
        bisect = true;
        lo = prev_d;
        flo = prev_f;
        hi = d;
        d = 0.5 * (lo + hi);
      } else {
        prev_d = d;
        prev_f = f;
        have_prev = true;
        d += std::abs(f);
        if (d > p.d_max) {
          done = true;  // miss
          return;
        }
      }
    }
    if (steps >= p.max_steps) {
      if (bisect) hit = 0.5 * (lo + hi);
      done = true;
    }
  }
};

}  // namespace

std::optional<double> raycast_sdf(const SdfField& field, const Point3& origin, const Point3& dir,
                                  const RaycastParams& params) {
  RayState s;
  while (!s.done) s.observe(field.value(origin + dir * s.d), params);
  return s.hit;
}

std::vector<ALineBoundary> resample_boundaries(const SdfField& field, const ScanConfig& cfg,
                                               const RaycastParams& params) {
  cfg.validate();
  const size_t total = static_cast<size_t>(cfg.n_frames) * cfg.n_columns;

  std::vector<Point3> origins(total), dirs(total);
  std::vector<RayState> states(total);
  for (int frame = 0; frame < cfg.n_frames; ++frame) {
    for (int col = 0; col < cfg.n_columns; ++col) {
      const size_t i = static_cast<size_t>(frame) * cfg.n_columns + col;
      const ALineRay ray = aline_ray(sample_time({frame, col, std::nullopt}, cfg), cfg);
      origins[i] = ray.origin;
      dirs[i] = ray.direction;
    }
  }

  std::vector<size_t> active(total);
  for (size_t i = 0; i < total; ++i) active[i] = i;
  std::vector<Point3> pts;
  std::vector<double> vals;
  while (!active.empty()) {
    pts.resize(active.size());
    for (size_t j = 0; j < active.size(); ++j) {
      const size_t i = active[j];
      pts[j] = origins[i] + dirs[i] * states[i].d;
    }
    field.values(pts, vals);
    size_t keep = 0;
    for (size_t j = 0; j < active.size(); ++j) {
      const size_t i = active[j];
      states[i].observe(vals[j], params);
      if (!states[i].done) active[keep++] = i;
    }
    active.resize(keep);
  }

  std::vector<ALineBoundary> out(cfg.n_frames);
  for (int frame = 0; frame < cfg.n_frames; ++frame) {
    ALineBoundary& b = out[frame];
    b.frame_index = frame;
    b.columns.resize(cfg.n_columns);
    for (int col = 0; col < cfg.n_columns; ++col) {
      const RayState& s = states[static_cast<size_t>(frame) * cfg.n_columns + col];
      auto& e = b.columns[col];
      e.source = SourceTag::resampled;
      if (s.hit && *s.hit <= cfg.d_max) e.d_tiss = *s.hit;
    }
  }
  return out;
}

std::vector<ALineBoundary> resample_boundaries(const MlpSdf& sdf, const ScanConfig& cfg) {
  MlpField field(sdf);
  RaycastParams params;
  params.d_max = cfg.d_max;
  params.eps_hit = 1e-4 * sdf.transform.scale;
  return resample_boundaries(field, cfg, params);
}

}  // namespace aoct
