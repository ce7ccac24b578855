#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include "camsearch/error.hpp"
#include "camsearch/scene.hpp"

namespace camsearch {

inline constexpr double kAspectVertical = 9.0 / 16.0;
inline constexpr double kImageHeightPx = 720.0;
inline constexpr std::array<double, 5> kAxialSampleHeights{0.2, 0.55, 0.9, 1.25, 1.6};
inline constexpr double kCoverageCell = 0.25;

/// Vertical field of view for a 16:9 pinhole with horizontal fov `fov`.
inline double vertical_fov(double fov) { return 2.0 * std::atan(std::tan(0.5 * fov) * kAspectVertical); }

/// Precomputed pinhole basis of one camera.
struct CameraFrame {
  Vec3 origin;
  Vec3 forward;
  Vec3 right;
  Vec3 up;
  double tan_half_h = 0.0;
  double tan_half_v = 0.0;
  double fov_v = 0.0;

  explicit CameraFrame(const CameraConfig& c)
      : origin(c.position()),
        forward{std::cos(c.pitch) * std::cos(c.yaw), std::cos(c.pitch) * std::sin(c.yaw), std::sin(c.pitch)},
        right{std::sin(c.yaw), -std::cos(c.yaw), 0.0},
        up{-std::sin(c.pitch) * std::cos(c.yaw), -std::sin(c.pitch) * std::sin(c.yaw), std::cos(c.pitch)},
        tan_half_h(std::tan(0.5 * c.fov)),
        tan_half_v(std::tan(0.5 * c.fov) * kAspectVertical),
        fov_v(vertical_fov(c.fov)) {}

  double depth(Vec3 p) const { return dot(p - origin, forward); }

  bool contains(Vec3 p) const {
    const Vec3 v = p - origin;
    const double a = dot(v, forward);
    if (!(a > 0.0)) return false;
    return std::abs(dot(v, right)) <= a * tan_half_h && std::abs(dot(v, up)) <= a * tan_half_v;
  }
};

inline bool in_frustum(const CameraConfig& config, Vec3 point) { return CameraFrame(config).contains(point); }

// ---------------------------------------------------------------------------
// Segment tests. Both treat the segment as open: touching an endpoint or
// grazing a surface does not block.

/// Slab test of the open segment (p, q) against an axis-aligned box.
inline bool segment_hits_box(Vec3 p, Vec3 q, const Box& b) {
  double t0 = 0.0;
  double t1 = 1.0;
  const std::array<double, 3> o{p.x, p.y, p.z};
  const std::array<double, 3> d{q.x - p.x, q.y - p.y, q.z - p.z};
  const std::array<double, 3> lo{b.min.x, b.min.y, b.min.z};
  const std::array<double, 3> hi{b.max.x, b.max.y, b.max.z};
  for (int k = 0; k < 3; ++k) {
    if (d[k] == 0.0) {
      if (!(o[k] > lo[k] && o[k] < hi[k])) return false;
      continue;
    }
    double ta = (lo[k] - o[k]) / d[k];
    double tb = (hi[k] - o[k]) / d[k];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (!(t0 < t1)) return false;
  }
  return t0 < t1;
}

/// Open segment against a vertical cylinder standing on the ground.
inline bool segment_hits_cylinder(Vec3 p, Vec3 q, Vec2 center, double radius, double height) {
  const double dx = q.x - p.x;
  const double dy = q.y - p.y;
  const double dz = q.z - p.z;
  const double ox = p.x - center.x;
  const double oy = p.y - center.y;
  double t0 = 0.0;
  double t1 = 1.0;

  const double a = dx * dx + dy * dy;
  const double c = ox * ox + oy * oy - radius * radius;
  if (a == 0.0) {
    if (!(c < 0.0)) return false;
  } else {
    const double b = ox * dx + oy * dy;
    const double disc = b * b - a * c;
    if (!(disc > 0.0)) return false;
    const double s = std::sqrt(disc);
    t0 = std::max(t0, (-b - s) / a);
    t1 = std::min(t1, (-b + s) / a);
    if (!(t0 < t1)) return false;
  }

  if (dz == 0.0) return p.z > 0.0 && p.z < height;
  double za = (0.0 - p.z) / dz;
  double zb = (height - p.z) / dz;
  if (za > zb) std::swap(za, zb);
  return std::max(t0, za) < std::min(t1, zb);
}

inline bool segment_clear_static(Vec3 p, Vec3 q, const Scene& scene) {
  for (const Box& b : scene.obstacles)
    if (segment_hits_box(p, q, b)) return false;
  return true;
}

/// The caller excludes the target itself from `occluders`.
inline bool segment_clear(Vec3 p, Vec3 q, const Scene& scene, std::span<const Pedestrian> occluders) {
  if (!segment_clear_static(p, q, scene)) return false;
  for (const Pedestrian& o : occluders)
    if (segment_hits_cylinder(p, q, o.position, Pedestrian::kRadius, Pedestrian::kHeight)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Per-target visibility

/// Fraction of the target's axial samples that are inside the frustum and
/// unobstructed. `target_index` identifies the target within `frame` so it
/// is not tested as its own occluder.
inline double visible_fraction(const CameraFrame& cam, std::size_t target_index, const Frame& frame,
                               const Scene& scene) {
  const Pedestrian& target = frame.pedestrians.at(target_index);
  int seen = 0;
  for (double h : kAxialSampleHeights) {
    const Vec3 p{target.position.x, target.position.y, h};
    if (!cam.contains(p)) continue;
    if (!segment_clear_static(cam.origin, p, scene)) continue;
    bool clear = true;
    for (std::size_t j = 0; j < frame.pedestrians.size() && clear; ++j) {
      if (j == target_index) continue;
      clear = !segment_hits_cylinder(cam.origin, p, frame.pedestrians[j].position, Pedestrian::kRadius,
                                     Pedestrian::kHeight);
    }
    if (clear) ++seen;
  }
  return static_cast<double>(seen) / static_cast<double>(kAxialSampleHeights.size());
}

inline double visible_fraction(const CameraConfig& config, const Pedestrian& target, const Frame& frame,
                               const Scene& scene) {
  for (std::size_t i = 0; i < frame.pedestrians.size(); ++i) {
    const Pedestrian& p = frame.pedestrians[i];
    if (p.position.x == target.position.x && p.position.y == target.position.y)
      return visible_fraction(CameraFrame(config), i, frame, scene);
  }
  throw Error(errc::kInvalidArgument, "visible_fraction: target is not part of the frame");
}

/// Apparent height in pixels of a standing pedestrian, 0 when behind the camera.
inline double pixel_height(const CameraFrame& cam, const Pedestrian& target) {
  const Vec3 mid{target.position.x, target.position.y, 0.5 * Pedestrian::kHeight};
  if (!(cam.depth(mid) > 0.0)) return 0.0;
  const double d = (mid - cam.origin).norm();
  return 2.0 * std::atan(0.5 * Pedestrian::kHeight / d) / cam.fov_v * kImageHeightPx;
}

inline double pixel_height(const CameraConfig& config, const Pedestrian& target) {
  return pixel_height(CameraFrame(config), target);
}

// ---------------------------------------------------------------------------
// Coverage grid

struct CoverageGrid {
  double cell = kCoverageCell;
  Vec2 origin;
  int nx = 0;
  int ny = 0;
  int num_cameras = 0;
  Vec2 extent;              // ground width and height; the last row/column may be partial
  std::vector<int> counts;  // row-major, row iy = 0 at ground min y

  int at(int ix, int iy) const { return counts[static_cast<std::size_t>(iy) * nx + ix]; }
  Vec2 center(int ix, int iy) const { return {origin.x + (ix + 0.5) * cell, origin.y + (iy + 0.5) * cell}; }

  /// Ground area of a cell: cell^2 except along the far edges.
  double cell_area(int ix, int iy) const {
    return std::clamp(extent.x - ix * cell, 0.0, cell) * std::clamp(extent.y - iy * cell, 0.0, cell);
  }

  /// Covered share of the ground area, each cell weighted by cell_area.
  double covered_fraction() const {
    double covered = 0.0, total = 0.0;
    for (int iy = 0; iy < ny; ++iy)
      for (int ix = 0; ix < nx; ++ix) {
        const double a = cell_area(ix, iy);
        total += a;
        if (at(ix, iy) > 0) covered += a;
      }
    return total > 0.0 ? covered / total : 0.0;
  }
};

inline CoverageGrid empty_grid(const Scene& scene, int num_cameras) {
  CoverageGrid g;
  g.origin = scene.ground.min;
  g.extent = {scene.ground.width(), scene.ground.height()};
  g.nx = static_cast<int>(std::ceil(scene.ground.width() / g.cell - 1e-9));
  g.ny = static_cast<int>(std::ceil(scene.ground.height() / g.cell - 1e-9));
  g.num_cameras = num_cameras;
  g.counts.assign(static_cast<std::size_t>(g.nx) * g.ny, 0);
  return g;
}

/// Cells of `grid` whose ground-level center is seen by `config` in the
/// empty scene are appended to `out` as flat indices.
inline void covered_cells(const Scene& scene, const CoverageGrid& grid, const CameraConfig& config,
                          std::vector<int>& out) {
  const CameraFrame cam(config);
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Vec2 c = grid.center(ix, iy);
      const Vec3 p{c.x, c.y, 0.0};
      if (cam.contains(p) && segment_clear_static(cam.origin, p, scene)) out.push_back(iy * grid.nx + ix);
    }
  }
}

inline CoverageGrid coverage_grid(const Scene& scene, std::span<const CameraConfig> configs) {
  if (configs.empty()) throw Error(errc::kEmptyCameras, "coverage_grid requires at least one camera");
  CoverageGrid grid = empty_grid(scene, static_cast<int>(configs.size()));
  std::vector<int> cells;
  for (const CameraConfig& c : configs) {
    cells.clear();
    covered_cells(scene, grid, c, cells);
    for (int idx : cells) ++grid.counts[static_cast<std::size_t>(idx)];
  }
  return grid;
}

/// Plain PGM (P2), maxval = number of cameras, first row at ground min y.
inline void write_pgm(std::ostream& out, const CoverageGrid& grid) {
  out << "P2\n" << grid.nx << ' ' << grid.ny << '\n' << std::max(grid.num_cameras, 1) << '\n';
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) out << (ix ? " " : "") << grid.at(ix, iy);
    out << '\n';
  }
}

inline void write_csv(std::ostream& out, const CoverageGrid& grid) {
  out << "x,y,count\n";
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Vec2 c = grid.center(ix, iy);
      out << c.x << ',' << c.y << ',' << grid.at(ix, iy) << '\n';
    }
  }
}

}  // namespace camsearch
