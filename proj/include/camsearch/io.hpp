#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "camsearch/error.hpp"
#include "camsearch/scene.hpp"

namespace camsearch {

/// Camera list from JSON: an array of {x, y, z, yaw, pitch, fov}, angles in
/// radians. Any other key is rejected, so `yaw_deg` and friends fail loudly
/// instead of being silently misread.
inline std::vector<CameraConfig> cameras_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(errc::kValidation, "cameras must be a JSON array");
  static const char* const kKeys[] = {"x", "y", "z", "yaw", "pitch", "fov"};
  std::vector<CameraConfig> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& c = j[i];
    const std::string path = "cameras[" + std::to_string(i) + "]";
    if (!c.is_object()) throw Error(errc::kValidation, path + " must be an object");
    for (const auto& [key, _] : c.items()) {
      bool known = false;
      for (const char* k : kKeys) known = known || key == k;
      if (known) continue;
      if (key.find("deg") != std::string::npos)
        throw Error(errc::kValidation, path + "." + key + ": degrees are not accepted, use radians (yaw/pitch/fov)");
      throw Error(errc::kValidation, path + ": unknown field '" + key + "'");
    }
    double v[6];
    for (int k = 0; k < 6; ++k) {
      if (!c.contains(kKeys[k])) throw Error(errc::kValidation, path + ": missing field '" + kKeys[k] + "'");
      const auto& f = c.at(kKeys[k]);
      if (!f.is_number()) throw Error(errc::kValidation, path + "." + kKeys[k] + " must be a number");
      v[k] = f.get<double>();
      if (!std::isfinite(v[k])) throw Error(errc::kValidation, path + "." + kKeys[k] + " must be finite");
    }
    out.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
  }
  return out;
}

inline nlohmann::ordered_json cameras_to_json(std::span<const CameraConfig> cams) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& c : cams)
    out.push_back({{"x", c.x}, {"y", c.y}, {"z", c.z}, {"yaw", c.yaw}, {"pitch", c.pitch}, {"fov", c.fov}});
  return out;
}

/// Checks a camera list against a scene: 1..N cameras, each inside the
/// configuration space.
inline void validate_cameras(const Scene& scene, std::span<const CameraConfig> cams) {
  if (cams.empty()) throw Error(errc::kEmptyCameras, "at least one camera is required");
  if (static_cast<int>(cams.size()) > scene.num_cameras)
    throw Error(errc::kValidation, std::to_string(cams.size()) + " cameras exceed the scene budget of " +
                                       std::to_string(scene.num_cameras));
  for (std::size_t i = 0; i < cams.size(); ++i)
    if (!scene.config_space.contains(cams[i]))
      throw Error(errc::kValidation, "cameras[" + std::to_string(i) + "] lies outside the configuration space");
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(errc::kIo, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(errc::kParse, what + ": " + e.what());
  }
}

inline std::vector<CameraConfig> load_cameras(const std::filesystem::path& path) {
  return cameras_from_json(parse_json(read_text(path), path.string()));
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error(errc::kIo, "cannot write " + path.string());
  out << text;
}

}  // namespace camsearch
