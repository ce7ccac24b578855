#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "camsearch/checkpoint.hpp"
#include "camsearch/error.hpp"
#include "camsearch/io.hpp"
#include "camsearch/ppo.hpp"
#include "camsearch/scene.hpp"

namespace camsearch {

inline nlohmann::ordered_json ppo_to_json(const PPOConfig& c) {
  return {{"buffer_size", c.buffer_size},
          {"minibatch", c.minibatch},
          {"epochs", c.epochs},
          {"clip", c.clip},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"learning_rate", c.learning_rate},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"diverse_weight", c.diverse_weight},
          {"focus_weight", c.focus_weight},
          {"focus_delta", c.focus_delta},
          {"max_steps", c.max_steps},
          {"max_grad_norm", c.max_grad_norm},
          {"normalize_advantages", c.normalize_advantages},
          {"reward_frames", c.reward_frames},
          {"eval_every_episodes", c.eval_every_episodes}};
}

/// Applies {key: value} overrides by field name; unknown keys and wrong types
/// are validation errors. The result is validated.
inline PPOConfig apply_ppo_overrides(PPOConfig c, const nlohmann::json& overrides) {
  if (!overrides.is_object()) throw Error(errc::kValidation, "ppo overrides must be a JSON object");
  for (const auto& [key, v] : overrides.items()) {
    auto num = [&]() {
      if (!v.is_number()) throw Error(errc::kValidation, "ppo." + key + " must be a number");
      return v.get<double>();
    };
    auto whole = [&]() {
      if (!v.is_number_integer()) throw Error(errc::kValidation, "ppo." + key + " must be an integer");
      return v.get<long long>();
    };
    if (key == "buffer_size") c.buffer_size = static_cast<int>(whole());
    else if (key == "minibatch") c.minibatch = static_cast<int>(whole());
    else if (key == "epochs") c.epochs = static_cast<int>(whole());
    else if (key == "clip") c.clip = num();
    else if (key == "gamma") c.gamma = num();
    else if (key == "gae_lambda") c.gae_lambda = num();
    else if (key == "learning_rate") c.learning_rate = num();
    else if (key == "entropy_coef") c.entropy_coef = num();
    else if (key == "value_coef") c.value_coef = num();
    else if (key == "diverse_weight") c.diverse_weight = num();
    else if (key == "focus_weight") c.focus_weight = num();
    else if (key == "focus_delta") c.focus_delta = num();
    else if (key == "max_steps") c.max_steps = whole();
    else if (key == "max_grad_norm") c.max_grad_norm = num();
    else if (key == "reward_frames") c.reward_frames = static_cast<int>(whole());
    else if (key == "eval_every_episodes") c.eval_every_episodes = static_cast<int>(whole());
    else if (key == "normalize_advantages") {
      if (!v.is_boolean()) throw Error(errc::kValidation, "ppo.normalize_advantages must be a boolean");
      c.normalize_advantages = v.get<bool>();
    } else {
      throw Error(errc::kValidation, "unknown ppo field '" + key + "'");
    }
  }
  c.validate();
  return c;
}

/// Inputs of one training run. The hash covers the scene content (not its
/// path), the seed and the effective PPO settings, so two runs with the same
/// hash are the same experiment.
struct RunManifest {
  std::filesystem::path scene_path;
  std::uint64_t seed = 0;
  nlohmann::json ppo_overrides = nlohmann::json::object();
  std::filesystem::path out_dir;

  std::string hash(const Scene& scene, const PPOConfig& effective) const {
    nlohmann::ordered_json in = {{"scene", scene_to_json(scene)}, {"seed", seed}, {"ppo", ppo_to_json(effective)}};
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(in.dump())));
    return buf;
  }

  nlohmann::ordered_json to_json(const Scene& scene, const PPOConfig& effective) const {
    return {{"hash", hash(scene, effective)},
            {"scene", scene.name},
            {"scene_path", scene_path.string()},
            {"seed", seed},
            {"ppo_overrides", ppo_overrides},
            {"ppo", ppo_to_json(effective)},
            {"out_dir", out_dir.string()}};
  }
};

}  // namespace camsearch
