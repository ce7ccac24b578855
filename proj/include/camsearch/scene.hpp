#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "camsearch/error.hpp"
#include "camsearch/rng.hpp"

namespace camsearch {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
  double norm() const { return std::sqrt(dot(*this, *this)); }
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double half_width() const { return 0.5 * (hi - lo); }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct Rect {
  Vec2 min;
  Vec2 max;

  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
  Vec2 center() const { return {0.5 * (min.x + max.x), 0.5 * (min.y + max.y)}; }
  bool contains(Vec2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
};

struct Box {
  Vec3 min;
  Vec3 max;

  Rect footprint() const { return {{min.x, min.y}, {max.x, max.y}}; }
};

/// One camera: position in meters, yaw/pitch/fov in radians. fov is the
/// horizontal field of view.
struct CameraConfig {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;
  double pitch = 0.0;
  double fov = kPi / 2.0;

  Vec3 position() const { return {x, y, z}; }

  /// (x, y, z, cos yaw, sin yaw, pitch, fov)
  std::array<double, 7> to_embedding() const {
    return {x, y, z, std::cos(yaw), std::sin(yaw), pitch, fov};
  }

  friend bool operator==(const CameraConfig&, const CameraConfig&) = default;
};

struct ConfigSpace {
  static constexpr Interval kPitchLimits{-kPi / 6.0, kPi / 6.0};
  static constexpr Interval kFovLimits{kPi / 6.0, 2.0 * kPi / 3.0};
  static constexpr Interval kYaw{0.0, kTwoPi};

  Interval x;
  Interval y;
  Interval z;
  Interval pitch = kPitchLimits;
  Interval fov = kFovLimits;

  /// Ranges of the six sampled DoFs in action order (x, y, z, yaw, pitch, fov).
  std::array<Interval, 6> dof_ranges() const { return {x, y, z, kYaw, pitch, fov}; }

  bool contains(const CameraConfig& c) const {
    return x.contains(c.x) && y.contains(c.y) && z.contains(c.z) && c.yaw >= 0.0 &&
           c.yaw < kTwoPi && pitch.contains(c.pitch) && fov.contains(c.fov);
  }
};

struct Scene {
  std::string name;
  Rect ground;
  std::vector<Box> obstacles;
  Rect spawn;
  ConfigSpace config_space;
  int num_cameras = 1;
  int max_walkers = 40;
  int max_groups = 10;
  int group_size_min = 2;
  int group_size_max = 4;
  int frame_count = 400;

  /// Frames [0, train_end()) are training frames, the rest are held out.
  int train_end() const { return frame_count * 9 / 10; }

  void validate() const;
};

struct Pedestrian {
  static constexpr double kRadius = 0.25;
  static constexpr double kHeight = 1.70;

  Vec2 position;
};

struct Frame {
  int index = 0;
  std::vector<Pedestrian> pedestrians;

  friend bool operator==(const Frame& a, const Frame& b) {
    if (a.index != b.index || a.pedestrians.size() != b.pedestrians.size()) return false;
    for (std::size_t i = 0; i < a.pedestrians.size(); ++i) {
      if (a.pedestrians[i].position.x != b.pedestrians[i].position.x ||
          a.pedestrians[i].position.y != b.pedestrians[i].position.y)
        return false;
    }
    return true;
  }
};

enum class Split { kTrain, kTest };

inline std::vector<int> frame_indices(const Scene& scene, Split split) {
  std::vector<int> out;
  const int lo = split == Split::kTrain ? 0 : scene.train_end();
  const int hi = split == Split::kTrain ? scene.train_end() : scene.frame_count;
  for (int i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(errc::kValidation, "scene invariant violated: " + what);
}

inline void require_interval(const Interval& iv, const std::string& name) {
  require(std::isfinite(iv.lo) && std::isfinite(iv.hi) && iv.lo < iv.hi,
          name + " must be a non-degenerate range (min < max)");
}

inline bool rect_inside(const Rect& inner, const Rect& outer) {
  return inner.min.x >= outer.min.x && inner.min.y >= outer.min.y && inner.max.x <= outer.max.x &&
         inner.max.y <= outer.max.y;
}

}  // namespace detail

inline void Scene::validate() const {
  using detail::require;
  using detail::require_interval;
  require(!name.empty(), "name must be non-empty");
  require(ground.min.x < ground.max.x && ground.min.y < ground.max.y, "ground must be non-degenerate");
  require(spawn.min.x <= spawn.max.x && spawn.min.y <= spawn.max.y, "spawn min must not exceed max");
  require(detail::rect_inside(spawn, ground), "spawn region must lie inside ground");
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const Box& b = obstacles[i];
    const std::string tag = "obstacle " + std::to_string(i);
    require(b.min.x < b.max.x && b.min.y < b.max.y && b.min.z < b.max.z, tag + " must have min < max");
    require(b.max.z > 0.0, tag + " must extend above ground");
  }
  require_interval(config_space.x, "config_space.x");
  require_interval(config_space.y, "config_space.y");
  require_interval(config_space.z, "config_space.z");
  require_interval(config_space.pitch, "config_space.pitch");
  require_interval(config_space.fov, "config_space.fov");
  require(config_space.pitch.lo >= ConfigSpace::kPitchLimits.lo - 1e-12 &&
              config_space.pitch.hi <= ConfigSpace::kPitchLimits.hi + 1e-12,
          "config_space.pitch must lie within [-pi/6, pi/6]");
  require(config_space.fov.lo >= ConfigSpace::kFovLimits.lo - 1e-12 &&
              config_space.fov.hi <= ConfigSpace::kFovLimits.hi + 1e-12,
          "config_space.fov must lie within [pi/6, 2pi/3]");
  require(num_cameras >= 1, "num_cameras must be >= 1");
  require(max_walkers >= 0, "max_walkers must be >= 0");
  require(max_groups >= 0, "max_groups must be >= 0");
  require(group_size_min >= 1 && group_size_min <= group_size_max, "group size range must be ordered");
  require(frame_count >= 1, "frame_count must be >= 1");
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

using nlohmann::json;

inline const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object() || !obj.contains(key))
    throw Error(errc::kParse, "missing field '" + path + key + "'");
  return obj.at(key);
}

inline double number(const json& v, const std::string& path) {
  if (!v.is_number()) throw Error(errc::kParse, "field '" + path + "' must be a number");
  return v.get<double>();
}

inline int integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw Error(errc::kParse, "field '" + path + "' must be an integer");
  return v.get<int>();
}

template <std::size_t K>
std::array<double, K> numbers(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != K)
    throw Error(errc::kParse, "field '" + path + "' must be an array of " + std::to_string(K) + " numbers");
  std::array<double, K> out{};
  for (std::size_t i = 0; i < K; ++i) out[i] = number(v[i], path + "[" + std::to_string(i) + "]");
  return out;
}

inline Rect rect(const json& v, const std::string& path) {
  const auto lo = numbers<2>(field(v, "min", path + "."), path + ".min");
  const auto hi = numbers<2>(field(v, "max", path + "."), path + ".max");
  return {{lo[0], lo[1]}, {hi[0], hi[1]}};
}

inline Interval interval(const json& v, const std::string& path) {
  const auto r = numbers<2>(v, path);
  return {r[0], r[1]};
}

inline json rect_json(const Rect& r) {
  return {{"min", {r.min.x, r.min.y}}, {"max", {r.max.x, r.max.y}}};
}

inline int line_of(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

}  // namespace detail

inline Scene scene_from_json(const nlohmann::json& j) {
  using namespace detail;
  Scene s;
  const auto& name = field(j, "name", "");
  if (!name.is_string()) throw Error(errc::kParse, "field 'name' must be a string");
  s.name = name.get<std::string>();
  s.ground = rect(field(j, "ground", ""), "ground");
  const auto& obstacles = field(j, "obstacles", "");
  if (!obstacles.is_array()) throw Error(errc::kParse, "field 'obstacles' must be an array");
  for (std::size_t i = 0; i < obstacles.size(); ++i) {
    const std::string p = "obstacles[" + std::to_string(i) + "]";
    const auto lo = numbers<3>(field(obstacles[i], "min", p + "."), p + ".min");
    const auto hi = numbers<3>(field(obstacles[i], "max", p + "."), p + ".max");
    s.obstacles.push_back({{lo[0], lo[1], lo[2]}, {hi[0], hi[1], hi[2]}});
  }
  s.spawn = rect(field(j, "spawn", ""), "spawn");
  const auto& cs = field(j, "config_space", "");
  s.config_space.x = interval(field(cs, "x", "config_space."), "config_space.x");
  s.config_space.y = interval(field(cs, "y", "config_space."), "config_space.y");
  s.config_space.z = interval(field(cs, "z", "config_space."), "config_space.z");
  if (cs.contains("pitch")) s.config_space.pitch = interval(cs.at("pitch"), "config_space.pitch");
  if (cs.contains("fov")) s.config_space.fov = interval(cs.at("fov"), "config_space.fov");
  s.num_cameras = integer(field(j, "num_cameras", ""), "num_cameras");
  if (j.contains("max_walkers")) s.max_walkers = integer(j.at("max_walkers"), "max_walkers");
  if (j.contains("max_groups")) s.max_groups = integer(j.at("max_groups"), "max_groups");
  if (j.contains("frame_count")) s.frame_count = integer(j.at("frame_count"), "frame_count");
  s.validate();
  return s;
}

inline nlohmann::json scene_to_json(const Scene& s) {
  using detail::rect_json;
  nlohmann::json obstacles = nlohmann::json::array();
  for (const Box& b : s.obstacles)
    obstacles.push_back({{"min", {b.min.x, b.min.y, b.min.z}}, {"max", {b.max.x, b.max.y, b.max.z}}});
  const auto& cs = s.config_space;
  return {{"name", s.name},
          {"ground", rect_json(s.ground)},
          {"obstacles", obstacles},
          {"spawn", rect_json(s.spawn)},
          {"config_space",
           {{"x", {cs.x.lo, cs.x.hi}},
            {"y", {cs.y.lo, cs.y.hi}},
            {"z", {cs.z.lo, cs.z.hi}},
            {"pitch", {cs.pitch.lo, cs.pitch.hi}},
            {"fov", {cs.fov.lo, cs.fov.hi}}}},
          {"num_cameras", s.num_cameras},
          {"max_walkers", s.max_walkers},
          {"max_groups", s.max_groups},
          {"frame_count", s.frame_count}};
}

inline Scene parse_scene(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(errc::kParse, "scene JSON parse error at line " +
                                  std::to_string(detail::line_of(text, e.byte > 0 ? e.byte - 1 : 0)) + ": " +
                                  e.what());
  }
  return scene_from_json(j);
}

inline Scene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::kSceneNotFound, "cannot open scene file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

// ---------------------------------------------------------------------------
// Geometry helpers

/// Affine map sending the ground rectangle onto [-1, 1]^2.
inline Vec2 normalize_xy(const Scene& scene, double x, double y) {
  const Vec2 c = scene.ground.center();
  return {(x - c.x) / (0.5 * scene.ground.width()), (y - c.y) / (0.5 * scene.ground.height())};
}

inline double distance_to_rect(Vec2 p, const Rect& r) {
  const double dx = std::max({r.min.x - p.x, 0.0, p.x - r.max.x});
  const double dy = std::max({r.min.y - p.y, 0.0, p.y - r.max.y});
  return std::hypot(dx, dy);
}

// ---------------------------------------------------------------------------
// Crowd sampling

inline constexpr int kMaxPlacementAttempts = 10000;
inline constexpr double kGroupRadius = 1.5;

namespace detail {

inline bool clear_of_obstacles(const Scene& scene, Vec2 p) {
  for (const Box& b : scene.obstacles)
    if (distance_to_rect(p, b.footprint()) < Pedestrian::kRadius) return false;
  return true;
}

inline bool inside_spawn(const Scene& scene, Vec2 p) {
  const double r = Pedestrian::kRadius;
  return p.x - r >= scene.spawn.min.x && p.x + r <= scene.spawn.max.x && p.y - r >= scene.spawn.min.y &&
         p.y + r <= scene.spawn.max.y;
}

inline bool clear_of_pedestrians(const std::vector<Pedestrian>& placed, Vec2 p) {
  const double min_d = 2.0 * Pedestrian::kRadius;
  for (const Pedestrian& q : placed)
    if (std::hypot(q.position.x - p.x, q.position.y - p.y) < min_d) return false;
  return true;
}

[[noreturn]] inline void over_dense(const Scene& scene, int frame_index) {
  throw Error(errc::kOverDense, "scene '" + scene.name + "' is over-dense: could not place a pedestrian in frame " +
                                    std::to_string(frame_index) + " after " +
                                    std::to_string(kMaxPlacementAttempts) + " attempts");
}

inline Vec2 uniform_in(CounterRng& rng, const Rect& r) {
  return {rng.uniform(r.min.x, r.max.x), rng.uniform(r.min.y, r.max.y)};
}

}  // namespace detail

/// Deterministic crowd for frame `index`. Each entity draws from its own
/// stream keyed by (seed, index, entity), so frames are independent of each
/// other. Groups are placed first, then free walkers.
inline Frame sample_frame(const Scene& scene, std::uint64_t master_seed, int index) {
  if (index < 0 || index >= scene.frame_count)
    throw Error(errc::kInvalidArgument, "frame index " + std::to_string(index) + " outside [0, " +
                                            std::to_string(scene.frame_count) + ")");
  constexpr std::uint64_t kCounts = 0;
  constexpr std::uint64_t kWalkerBase = 1;
  constexpr std::uint64_t kGroupBase = 1'000'000;

  const auto frame_key = static_cast<std::uint64_t>(index);
  CounterRng counts({master_seed, frame_key, kCounts});
  const int walkers = static_cast<int>(counts.uniform_int(scene.max_walkers / 2, scene.max_walkers));
  const int groups = static_cast<int>(counts.uniform_int(0, scene.max_groups));

  Frame frame;
  frame.index = index;
  auto& placed = frame.pedestrians;
  auto valid = [&](Vec2 p) {
    return detail::inside_spawn(scene, p) && detail::clear_of_obstacles(scene, p) &&
           detail::clear_of_pedestrians(placed, p);
  };

  for (int g = 0; g < groups; ++g) {
    CounterRng rng({master_seed, frame_key, kGroupBase + static_cast<std::uint64_t>(g)});
    const int size = static_cast<int>(rng.uniform_int(scene.group_size_min, scene.group_size_max));
    Vec2 centroid;
    int attempt = 0;
    for (; attempt < kMaxPlacementAttempts; ++attempt) {
      centroid = detail::uniform_in(rng, scene.spawn);
      if (detail::inside_spawn(scene, centroid) && detail::clear_of_obstacles(scene, centroid)) break;
    }
    if (attempt == kMaxPlacementAttempts) detail::over_dense(scene, index);
    for (int m = 0; m < size; ++m) {
      bool ok = false;
      for (attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
        const double r = kGroupRadius * std::sqrt(rng.uniform());
        const double a = kTwoPi * rng.uniform();
        const Vec2 p{centroid.x + r * std::cos(a), centroid.y + r * std::sin(a)};
        if (valid(p)) {
          placed.push_back({p});
          ok = true;
        }
      }
      if (!ok) detail::over_dense(scene, index);
    }
  }

  for (int w = 0; w < walkers; ++w) {
    CounterRng rng({master_seed, frame_key, kWalkerBase + static_cast<std::uint64_t>(w)});
    bool ok = false;
    for (int attempt = 0; attempt < kMaxPlacementAttempts && !ok; ++attempt) {
      const Vec2 p = detail::uniform_in(rng, scene.spawn);
      if (valid(p)) {
        placed.push_back({p});
        ok = true;
      }
    }
    if (!ok) detail::over_dense(scene, index);
  }
  return frame;
}

/// All frames of a scene, materialized once (sample_frame is pure).
inline std::vector<Frame> sample_all_frames(const Scene& scene, std::uint64_t master_seed) {
  std::vector<Frame> frames;
  frames.reserve(static_cast<std::size_t>(scene.frame_count));
  for (int i = 0; i < scene.frame_count; ++i) frames.push_back(sample_frame(scene, master_seed, i));
  return frames;
}

}  // namespace camsearch
