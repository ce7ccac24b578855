#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "camsearch/error.hpp"
#include "camsearch/scene.hpp"

namespace camsearch {

#ifdef CAMSEARCH_DATA_DIR
inline const std::filesystem::path kBundledSceneDir = std::filesystem::path(CAMSEARCH_DATA_DIR) / "scenes";
#else
inline const std::filesystem::path kBundledSceneDir = "data/scenes";
#endif

struct SceneEntry {
  std::string name;  // file stem
  std::filesystem::path path;
  bool bundled = false;
};

/// Scene lookup by name over user directories and the bundled fixtures.
/// User directories come first, so a user scene shadows a bundled one of the
/// same name.
class SceneCatalog {
 public:
  explicit SceneCatalog(std::vector<std::filesystem::path> user_dirs = {}, bool include_bundled = true)
      : user_dirs_(std::move(user_dirs)), include_bundled_(include_bundled) {}

  std::vector<SceneEntry> list() const {
    std::map<std::string, SceneEntry> by_name;
    auto scan = [&](const std::filesystem::path& dir, bool bundled) {
      std::error_code ec;
      if (!std::filesystem::is_directory(dir, ec)) return;
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(dir, ec))
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
      for (const auto& f : files) {
        std::string name = f.stem().string();
        if (name.ends_with(".scene")) name.resize(name.size() - 6);
        by_name.try_emplace(name, SceneEntry{name, f, bundled});
      }
    };
    for (const auto& d : user_dirs_) scan(d, false);
    if (include_bundled_) scan(kBundledSceneDir, true);
    std::vector<SceneEntry> out;
    for (auto& [_, e] : by_name) out.push_back(std::move(e));
    return out;
  }

  /// Accepts a catalog name or a path to a scene file.
  Scene load(const std::string& name_or_path) const {
    for (const auto& e : list())
      if (e.name == name_or_path) return load_scene(e.path);
    const std::filesystem::path p(name_or_path);
    std::error_code ec;
    if (p.extension() == ".json" && std::filesystem::is_regular_file(p, ec)) return load_scene(p);
    throw Error(errc::kSceneNotFound, "unknown scene '" + name_or_path + "'");
  }

  std::filesystem::path path_of(const std::string& name_or_path) const {
    for (const auto& e : list())
      if (e.name == name_or_path) return e.path;
    return name_or_path;
  }

 private:
  std::vector<std::filesystem::path> user_dirs_;
  bool include_bundled_ = true;
};

/// What the studio needs to draw a scene.
inline nlohmann::ordered_json scene_summary(const Scene& s) {
  nlohmann::ordered_json obstacles = nlohmann::ordered_json::array();
  for (const Box& b : s.obstacles)
    obstacles.push_back({{"min", {b.min.x, b.min.y, b.min.z}}, {"max", {b.max.x, b.max.y, b.max.z}}});
  const ConfigSpace& cs = s.config_space;
  return {{"name", s.name},
          {"ground", {{"min", {s.ground.min.x, s.ground.min.y}}, {"max", {s.ground.max.x, s.ground.max.y}}}},
          {"spawn", {{"min", {s.spawn.min.x, s.spawn.min.y}}, {"max", {s.spawn.max.x, s.spawn.max.y}}}},
          {"obstacles", obstacles},
          {"config_space",
           {{"x", {cs.x.lo, cs.x.hi}},
            {"y", {cs.y.lo, cs.y.hi}},
            {"z", {cs.z.lo, cs.z.hi}},
            {"yaw", {0.0, kTwoPi}},
            {"pitch", {cs.pitch.lo, cs.pitch.hi}},
            {"fov", {cs.fov.lo, cs.fov.hi}}}},
          {"num_cameras", s.num_cameras},
          {"max_walkers", s.max_walkers},
          {"frame_count", s.frame_count},
          {"train_frames", s.train_end()}};
}

inline nlohmann::ordered_json frame_json(const Frame& f, std::uint64_t seed) {
  nlohmann::ordered_json peds = nlohmann::ordered_json::array();
  for (const auto& p : f.pedestrians) peds.push_back({{"x", p.position.x}, {"y", p.position.y}});
  return {{"index", f.index},
          {"seed", seed},
          {"radius", Pedestrian::kRadius},
          {"height", Pedestrian::kHeight},
          {"pedestrians", peds}};
}

}  // namespace camsearch
