#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "camsearch/checkpoint.hpp"
#include "camsearch/error.hpp"
#include "camsearch/evaluation.hpp"
#include "camsearch/generator.hpp"
#include "camsearch/io.hpp"
#include "camsearch/nn/adam.hpp"
#include "camsearch/nn/tensor.hpp"
#include "camsearch/ppo.hpp"
#include "camsearch/rng.hpp"
#include "camsearch/scene.hpp"
#include "camsearch/visibility.hpp"

namespace camsearch {

// ---------------------------------------------------------------------------
// Regularizers

/// Normalized ground position and yaw direction of one camera.
struct NormalizedPose {
  double x = 0.0;
  double y = 0.0;
  double c = 1.0;
  double s = 0.0;
};

inline NormalizedPose normalized_pose(const Scene& scene, const CameraConfig& cam) {
  const Vec2 p = normalize_xy(scene, cam.x, cam.y);
  return {p.x, p.y, std::cos(cam.yaw), std::sin(cam.yaw)};
}

/// Diversity term of the newest camera (the last one) against every earlier
/// camera; lower means more spread out in position and heading.
inline double r_diverse(std::span<const CameraConfig> configs, const Scene& scene) {
  if (configs.empty()) throw Error(errc::kInvalidArgument, "r_diverse needs at least one camera");
  const NormalizedPose a = normalized_pose(scene, configs.back());
  double r = 0.0;
  for (std::size_t i = 0; i + 1 < configs.size(); ++i) {
    const NormalizedPose b = normalized_pose(scene, configs[i]);
    r -= std::hypot(a.x - b.x, a.y - b.y);
    r -= std::hypot(a.c - b.c, a.s - b.s);
  }
  return r;
}

/// Finite-difference growth of the distance from the scene center when
/// stepping along the viewing direction: +1 facing straight out, -1 facing
/// straight in.
inline double r_focus(const CameraConfig& cam, const Scene& scene, double delta) {
  if (!(delta > 0.0)) throw Error(errc::kInvalidArgument, "r_focus needs delta > 0");
  const NormalizedPose p = normalized_pose(scene, cam);
  return (std::hypot(p.x + delta * p.c, p.y + delta * p.s) - std::hypot(p.x, p.y)) / delta;
}

/// Batch-mean regularizers on the tape. `squashed` holds the reparameterized
/// actions in [-1, 1] ([B x 6]); each row's earlier cameras come from its
/// stored state and are constants.
inline RegularizerTerms regularizer_terms(nn::Tape& t, std::span<const Transition* const> batch, nn::Var squashed,
                                          const Scene& scene, double delta) {
  const std::size_t b = batch.size();
  if (squashed.rows() != b || squashed.cols() != kActionDims)
    throw Error(errc::kShapeMismatch, "regularizer_terms: squashed actions must be [B x 6]");
  const auto r = scene.config_space.dof_ranges();
  const double gx = 0.5 * scene.ground.width(), gy = 0.5 * scene.ground.height();
  const Vec2 gc = scene.ground.center();

  nn::Var xbar = nn::add_scalar(nn::scale(nn::slice(squashed, 1, 0, 1), r[0].half_width() / gx), (r[0].mid() - gc.x) / gx);
  nn::Var ybar = nn::add_scalar(nn::scale(nn::slice(squashed, 1, 1, 2), r[1].half_width() / gy), (r[1].mid() - gc.y) / gy);
  nn::Var psi = nn::add_scalar(nn::scale(nn::slice(squashed, 1, 3, 4), r[3].half_width()), r[3].mid());
  nn::Var pos = nn::concat({xbar, ybar}, 1);
  nn::Var dir = nn::concat({nn::cos(psi), nn::sin(psi)}, 1);

  nn::Var step = nn::add(pos, nn::scale(dir, delta));
  nn::Var focus = nn::reduce_mean(nn::scale(nn::sub(nn::row_norm(step), nn::row_norm(pos)), 1.0 / delta));

  std::size_t max_prev = 0;
  for (const Transition* tr : batch) max_prev = std::max(max_prev, tr->state.placed.size());
  nn::Var diverse = t.constant(1, 1, 0.0);
  if (max_prev > 0) {
    std::optional<nn::Var> total;
    for (std::size_t k = 0; k < max_prev; ++k) {
      std::vector<double> prev_pos(2 * b, 0.0), prev_dir(2 * b, 0.0), mask(b, 0.0);
      for (std::size_t i = 0; i < b; ++i) {
        const auto& placed = batch[i]->state.placed;
        if (k >= placed.size()) continue;
        const NormalizedPose p = normalized_pose(scene, placed[k]);
        prev_pos[2 * i] = p.x;
        prev_pos[2 * i + 1] = p.y;
        prev_dir[2 * i] = p.c;
        prev_dir[2 * i + 1] = p.s;
        mask[i] = 1.0;
      }
      nn::Var d = nn::add(nn::row_norm(nn::sub(pos, t.constant(b, 2, std::move(prev_pos)))),
                          nn::row_norm(nn::sub(dir, t.constant(b, 2, std::move(prev_dir)))));
      d = nn::mul(d, t.constant(b, 1, std::move(mask)));
      total = total ? nn::add(*total, d) : d;
    }
    diverse = nn::scale(nn::reduce_mean(*total), -1.0);
  }
  return {diverse, focus};
}

// ---------------------------------------------------------------------------
// Reward

/// Training frames for one episode: `count` distinct indices drawn from the
/// training split with a stream keyed by (seed, episode).
inline std::vector<int> episode_frames(const Scene& scene, std::uint64_t master_seed, std::uint64_t episode,
                                       int count) {
  const int n = scene.train_end();
  if (count < 1 || count > n)
    throw Error(errc::kInvalidArgument, "cannot draw " + std::to_string(count) + " training frames out of " +
                                            std::to_string(n));
  CounterRng rng({master_seed, 0x65706973ULL, episode});
  std::vector<int> out;
  while (static_cast<int>(out.size()) < count) {
    const int i = static_cast<int>(rng.uniform_int(0, n - 1));
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  return out;
}

/// Terminal reward: MODA of a complete N-camera configuration on the given
/// training frames.
inline double reward(const Scene& scene, std::span<const CameraConfig> configs, std::span<const int> train_frames,
                     std::uint64_t master_seed, const DetectorParams& params = {}) {
  if (static_cast<int>(configs.size()) != scene.num_cameras)
    throw Error(errc::kInvalidArgument, "reward needs exactly N = " + std::to_string(scene.num_cameras) + " cameras");
  return evaluate_config(scene, configs, train_frames, master_seed, params).moda;
}

/// Frames of one scene and seed, sampled once.
class FrameCache {
 public:
  FrameCache(const Scene& scene, std::uint64_t master_seed)
      : frames_(sample_all_frames(scene, master_seed)), seed_(master_seed) {}

  std::uint64_t seed() const { return seed_; }
  const Frame& operator[](int i) const { return frames_.at(static_cast<std::size_t>(i)); }

  std::vector<const Frame*> select(std::span<const int> indices) const {
    std::vector<const Frame*> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(&(*this)[i]);
    return out;
  }

 private:
  std::vector<Frame> frames_;
  std::uint64_t seed_;
};

/// Deterministic N-camera rollout using the mean action at every step.
inline std::vector<CameraConfig> greedy_rollout(Generator& gen) {
  EpisodeState s;
  s.budget = gen.num_cameras();
  while (s.t() < s.budget) s.placed.push_back(mean_action(gen.evaluate(s).first, gen.config_space()).decoded);
  return s.placed;
}

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  PPOConfig ppo;
  GeneratorConfig generator;  // num_cameras is taken from the scene
  std::uint64_t seed = 0;
  DetectorParams detector;
  std::filesystem::path out_dir;  // empty: nothing is written
  bool resume = false;            // continue from out_dir/checkpoint.slck
  std::string manifest;           // run manifest hash, cited in train_state.json
};

struct TrainRecord {
  long long step = 0;     // 1-based global step
  long long episode = 0;  // 0-based episode of this step
  double reward = 0.0;    // r_t, non-zero only at terminal steps
  std::optional<double> moda_eval;    // set on the step an evaluation ran
  std::optional<UpdateStats> update;  // set on the step a PPO update ran

  nlohmann::ordered_json to_json() const {
    auto opt = [](std::optional<double> v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["step"] = step;
    j["episode"] = episode;
    j["reward"] = reward;
    j["moda_eval"] = opt(moda_eval);
    j["loss_pi"] = opt(update ? std::optional(update->loss_pi) : std::nullopt);
    j["loss_v"] = opt(update ? std::optional(update->loss_v) : std::nullopt);
    j["entropy"] = opt(update ? std::optional(update->entropy) : std::nullopt);
    j["r_div"] = opt(update ? std::optional(update->r_div) : std::nullopt);
    j["r_focus"] = opt(update ? std::optional(update->r_focus) : std::nullopt);
    return j;
  }
};

struct EvalPoint {
  long long episode = 0;
  long long step = 0;
  double moda = 0.0;
  std::vector<CameraConfig> cameras;
};

struct TrainProgress {
  long long step = 0;
  long long episode = 0;
  double best_moda = 0.0;
  std::vector<CameraConfig> best_cameras;
  bool has_best = false;
};

struct TrainHooks {
  std::function<void(const TrainRecord&)> on_record;
  std::function<void(const TrainProgress&)> on_progress;  // after every episode
  std::function<bool()> should_stop;                      // polled between episodes
};

struct TrainResult {
  std::vector<TrainRecord> log;
  std::vector<double> episode_rewards;
  std::vector<EvalPoint> evals;
  double best_moda = 0.0;
  std::vector<CameraConfig> best_cameras;
  Checkpoint best_checkpoint;
  Checkpoint final_checkpoint;
  long long steps = 0;
  long long episodes = 0;
  std::size_t max_buffer = 0;
  bool stopped = false;
};

inline constexpr const char* kCheckpointFile = "checkpoint.slck";
inline constexpr const char* kBestCheckpointFile = "best.slck";
inline constexpr const char* kBestCamerasFile = "best_cameras.json";
inline constexpr const char* kLogFile = "train_log.ndjson";
inline constexpr const char* kStateFile = "train_state.json";

namespace detail {

inline nlohmann::ordered_json train_state_json(const TrainResult& r, const std::string& manifest) {
  nlohmann::ordered_json evals = nlohmann::ordered_json::array();
  for (const auto& e : r.evals)
    evals.push_back({{"episode", e.episode}, {"step", e.step}, {"moda", e.moda}, {"cameras", cameras_to_json(e.cameras)}});
  return {{"manifest", manifest},
          {"steps", r.steps},
          {"episodes", r.episodes},
          {"best_moda", r.best_moda},
          {"best_cameras", cameras_to_json(r.best_cameras)},
          {"episode_rewards", r.episode_rewards},
          {"evals", evals}};
}

inline void restore_train_state(const nlohmann::json& j, TrainResult& r) {
  r.best_moda = j.at("best_moda").get<double>();
  r.best_cameras = cameras_from_json(j.at("best_cameras"));
  r.episode_rewards = j.at("episode_rewards").get<std::vector<double>>();
  for (const auto& e : j.at("evals"))
    r.evals.push_back({e.at("episode").get<long long>(), e.at("step").get<long long>(), e.at("moda").get<double>(),
                       cameras_from_json(e.at("cameras"))});
}

}  // namespace detail

/// Algorithm-1 training with the oracle detector frozen: each episode draws
/// fresh training frames, rolls out N placements from the stochastic policy,
/// and pays the terminal MODA. PPO runs at the first episode boundary where
/// the buffer holds at least L transitions. The greedy policy is evaluated on
/// the held-out frames every `eval_every_episodes` episodes and at the end;
/// the best evaluation is kept. Training stops at the first episode boundary
/// with step >= max_steps.
inline TrainResult train(const Scene& scene, const TrainOptions& opts, const TrainHooks& hooks = {}) {
  scene.validate();
  opts.ppo.validate();
  GeneratorConfig gcfg = opts.generator;
  gcfg.num_cameras = scene.num_cameras;
  const int n = scene.num_cameras;

  Generator gen(gcfg, scene.config_space, derive_key({opts.seed, 0x67656eULL}));
  nn::AdamState adam;
  adam.learning_rate = opts.ppo.learning_rate;
  CounterRng policy_rng({opts.seed, 0x706f6cULL});
  CounterRng shuffle_rng({opts.seed, 0x736866ULL});
  const std::uint64_t scene_hash = fnv1a(scene.name);

  const FrameCache frames(scene, opts.seed);
  const std::vector<int> test_idx = frame_indices(scene, Split::kTest);
  const std::vector<const Frame*> test_frames = frames.select(test_idx);

  TrainResult result;
  const bool write = !opts.out_dir.empty();
  std::ofstream log_out;
  if (write) std::filesystem::create_directories(opts.out_dir);

  long long step = 0, episode = 0;
  if (opts.resume) {
    if (!write) throw Error(errc::kInvalidArgument, "resume needs an output directory");
    const Checkpoint ck = load_checkpoint(opts.out_dir / kCheckpointFile);
    if (ck.scene_hash != scene_hash || static_cast<int>(ck.num_cameras) != n)
      throw Error(errc::kBadCheckpoint, "checkpoint belongs to a different scene or camera count");
    if (ck.rng_states.size() != 2) throw Error(errc::kBadCheckpoint, "checkpoint lacks the training RNG states");
    auto params = gen.parameters();
    apply_checkpoint(ck, params, &adam);
    policy_rng = CounterRng(ck.rng_states[0].first, ck.rng_states[0].second);
    shuffle_rng = CounterRng(ck.rng_states[1].first, ck.rng_states[1].second);
    step = static_cast<long long>(ck.step);
    episode = static_cast<long long>(ck.episode);
    detail::restore_train_state(parse_json(read_text(opts.out_dir / kStateFile), kStateFile), result);
    result.episode_rewards.resize(static_cast<std::size_t>(episode));
    std::erase_if(result.evals, [&](const EvalPoint& e) { return e.episode > episode; });
    result.best_moda = 0.0;
    result.best_cameras.clear();
    for (const auto& e : result.evals)
      if (result.best_cameras.empty() || e.moda > result.best_moda) {
        result.best_moda = e.moda;
        result.best_cameras = e.cameras;
      }
    if (std::filesystem::exists(opts.out_dir / kBestCheckpointFile)) {
      Checkpoint best = load_checkpoint(opts.out_dir / kBestCheckpointFile);
      if (static_cast<long long>(best.episode) <= episode) result.best_checkpoint = std::move(best);
    }
    // Drop log lines written after the checkpoint.
    std::vector<std::string> kept;
    {
      std::ifstream in(opts.out_dir / kLogFile);
      for (std::string line; std::getline(in, line);)
        if (!line.empty() && nlohmann::json::parse(line).at("step").get<long long>() <= step) kept.push_back(line);
    }
    log_out.open(opts.out_dir / kLogFile, std::ios::trunc);
    for (const auto& l : kept) log_out << l << '\n';
  } else if (write) {
    log_out.open(opts.out_dir / kLogFile, std::ios::trunc);
  }
  if (write && !log_out) throw Error(errc::kIo, "cannot write training log in " + opts.out_dir.string());

  auto snapshot = [&]() {
    auto params = gen.parameters();
    return make_checkpoint(params, adam, scene_hash, static_cast<std::uint32_t>(n), static_cast<std::uint64_t>(step),
                           static_cast<std::uint64_t>(episode), {policy_rng, shuffle_rng});
  };
  auto evaluate_greedy = [&]() -> EvalPoint {
    EvalPoint e{episode, step, 0.0, greedy_rollout(gen)};
    e.moda = evaluate_frames(scene, e.cameras, test_frames, opts.detector).moda;
    return e;
  };
  auto record_eval = [&](const EvalPoint& e) {
    result.evals.push_back(e);
    if (result.best_cameras.empty() || e.moda > result.best_moda) {
      result.best_moda = e.moda;
      result.best_cameras = e.cameras;
      result.best_checkpoint = snapshot();
      if (write) {
        save_checkpoint(result.best_checkpoint, opts.out_dir / kBestCheckpointFile);
        write_text(opts.out_dir / kBestCamerasFile, cameras_to_json(result.best_cameras).dump(2) + "\n");
      }
    }
  };
  auto emit = [&](const TrainRecord& rec) {
    if (write) log_out << rec.to_json().dump() << '\n';
    if (hooks.on_record) hooks.on_record(rec);
    result.log.push_back(rec);
  };

  const RegularizerFn reg = [&](nn::Tape& t, std::span<const Transition* const> batch, nn::Var squashed) {
    return regularizer_terms(t, batch, squashed, scene, opts.ppo.focus_delta);
  };

  std::vector<Transition> buffer;
  long long last_eval_episode = result.evals.empty() ? -1 : result.evals.back().episode;
  while (step < opts.ppo.max_steps) {
    if (hooks.should_stop && hooks.should_stop()) {
      result.stopped = true;
      break;
    }
    const std::vector<int> idx =
        episode_frames(scene, opts.seed, static_cast<std::uint64_t>(episode), opts.ppo.reward_frames);

    EpisodeState state;
    state.budget = n;
    const std::size_t first = buffer.size();
    for (int t = 0; t < n; ++t) {
      const auto [dist, value] = gen.evaluate(state);
      const Action a = sample_action(dist, scene.config_space, policy_rng);
      Transition tr;
      tr.state = state;
      tr.action = a;
      tr.log_prob = a.log_prob;
      tr.value = value;
      tr.done = t == n - 1;
      buffer.push_back(std::move(tr));
      state.placed.push_back(a.decoded);
    }
    const double r = evaluate_frames(scene, state.placed, frames.select(idx), opts.detector).moda;
    buffer.back().reward = r;
    result.episode_rewards.push_back(r);
    result.max_buffer = std::max(result.max_buffer, buffer.size());

    std::vector<TrainRecord> recs;
    for (int t = 0; t < n; ++t) recs.push_back({step + t + 1, episode, buffer[first + t].reward, {}, {}});
    step += n;
    ++episode;

    if (buffer.size() >= static_cast<std::size_t>(opts.ppo.buffer_size)) {
      recs.back().update = ppo_update(gen, buffer, opts.ppo, adam, shuffle_rng, reg);
      if (write) save_checkpoint(snapshot(), opts.out_dir / kCheckpointFile);
    }
    if (episode % opts.ppo.eval_every_episodes == 0 || step >= opts.ppo.max_steps) {
      const EvalPoint e = evaluate_greedy();
      recs.back().moda_eval = e.moda;
      record_eval(e);
      last_eval_episode = episode;
    }
    for (const auto& rec : recs) emit(rec);
    if (write && recs.back().update) write_text(opts.out_dir / kStateFile, detail::train_state_json(result, opts.manifest).dump() + "\n");
    if (hooks.on_progress) hooks.on_progress({step, episode, result.best_moda, result.best_cameras, !result.best_cameras.empty()});
  }
  if (last_eval_episode != episode) record_eval(evaluate_greedy());

  result.steps = step;
  result.episodes = episode;
  result.final_checkpoint = snapshot();
  if (write) {
    save_checkpoint(result.final_checkpoint, opts.out_dir / "final.slck");
    write_text(opts.out_dir / kStateFile, detail::train_state_json(result, opts.manifest).dump() + "\n");
  }
  return result;
}

/// Moving average of `values` over a trailing window (shorter at the start).
inline std::vector<double> moving_average(std::span<const double> values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(window, i + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Baselines

struct BaselineResult {
  std::vector<CameraConfig> cameras;
  double train_score = 0.0;  // random search: MODA on the selection frame; coverage: covered fraction
  EvalReport test;           // held-out evaluation of the chosen configuration
};

inline CameraConfig sample_uniform_config(const ConfigSpace& cs, CounterRng& rng) {
  CameraConfig c;
  c.x = rng.uniform(cs.x.lo, cs.x.hi);
  c.y = rng.uniform(cs.y.lo, cs.y.hi);
  c.z = rng.uniform(cs.z.lo, cs.z.hi);
  c.yaw = rng.uniform(0.0, kTwoPi);
  c.pitch = rng.uniform(cs.pitch.lo, cs.pitch.hi);
  c.fov = rng.uniform(cs.fov.lo, cs.fov.hi);
  return c;
}

/// Uniform sampling of full configurations, scored on a single training
/// frame (frame 0); the first sample with the strictly best score wins.
inline BaselineResult baseline_random_search(const Scene& scene, long long budget, std::uint64_t master_seed,
                                             const DetectorParams& params = {}) {
  if (budget < 1) throw Error(errc::kInvalidArgument, "random search budget must be >= 1");
  scene.validate();
  const Frame selection = sample_frame(scene, master_seed, 0);
  const Frame* sel[] = {&selection};
  CounterRng rng({master_seed, 0x726e64ULL});
  BaselineResult best;
  bool have = false;
  std::vector<CameraConfig> cams(static_cast<std::size_t>(scene.num_cameras));
  for (long long i = 0; i < budget; ++i) {
    for (auto& c : cams) c = sample_uniform_config(scene.config_space, rng);
    const double s = evaluate_frames(scene, cams, sel, params).moda;
    if (!have || s > best.train_score) {
      best.cameras = cams;
      best.train_score = s;
      have = true;
    }
  }
  const auto test_idx = frame_indices(scene, Split::kTest);
  best.test = evaluate_config(scene, best.cameras, test_idx, master_seed, params);
  return best;
}

/// Discretization of the max-coverage candidate set. Positions step over
/// the configuration-space x/y ranges (inclusive of both ends when they
/// fall on the grid); the other DoFs are evenly spaced over their ranges,
/// yaw over [0, 2 pi) without the endpoint.
struct CandidateGridSpec {
  double position_step = 1.0;
  int heights = 3;
  int yaws = 16;
  int pitches = 3;
  int fovs = 3;
};

namespace detail {

inline std::vector<double> even_steps(const Interval& r, int count) {
  if (count == 1) return {r.mid()};
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(r.lo + r.width() * i / (count - 1));
  return out;
}

inline std::vector<double> grid_steps(const Interval& r, double step) {
  std::vector<double> out;
  for (int i = 0;; ++i) {
    const double v = r.lo + step * i;
    if (v > r.hi + 1e-9) break;
    out.push_back(std::min(v, r.hi));
  }
  return out;
}

}  // namespace detail

/// Candidate poses in index order: x outermost, then y, height, yaw, pitch,
/// fov innermost.
inline std::vector<CameraConfig> candidate_grid(const ConfigSpace& cs, const CandidateGridSpec& spec) {
  if (!(spec.position_step > 0.0) || spec.heights < 1 || spec.yaws < 1 || spec.pitches < 1 || spec.fovs < 1)
    throw Error(errc::kInvalidArgument, "empty candidate set");
  const auto xs = detail::grid_steps(cs.x, spec.position_step);
  const auto ys = detail::grid_steps(cs.y, spec.position_step);
  const auto zs = detail::even_steps(cs.z, spec.heights);
  const auto ps = detail::even_steps(cs.pitch, spec.pitches);
  const auto fs = detail::even_steps(cs.fov, spec.fovs);
  std::vector<CameraConfig> out;
  for (double x : xs)
    for (double y : ys)
      for (double z : zs)
        for (int k = 0; k < spec.yaws; ++k)
          for (double p : ps)
            for (double f : fs) out.push_back({x, y, z, kTwoPi * k / spec.yaws, p, f});
  if (out.empty()) throw Error(errc::kInvalidArgument, "empty candidate set");
  return out;
}

struct CoverageBaselineResult : BaselineResult {
  std::vector<int> gains;  // newly covered cells of each greedy pick
  std::vector<std::size_t> picks;  // candidate indices
};

/// Greedy max-coverage placement on the empty scene. Each pick maximizes the
/// number of newly covered ground cells; ties go to the lowest candidate
/// index. Cell visibility uses the same test as coverage_grid.
inline CoverageBaselineResult baseline_max_coverage(const Scene& scene, const CandidateGridSpec& spec = {},
                                                    std::uint64_t master_seed = 0, const DetectorParams& params = {},
                                                    bool evaluate = true) {
  scene.validate();
  const std::vector<CameraConfig> cands = candidate_grid(scene.config_space, spec);
  const CoverageGrid grid = empty_grid(scene, scene.num_cameras);
  const std::size_t cells = grid.counts.size();
  const std::size_t words = (cells + 63) / 64;

  // Static line of sight depends only on the camera position, so it is
  // computed once per (x, y, z) and shared by every orientation.
  std::vector<Vec3> centers(cells);
  for (int iy = 0; iy < grid.ny; ++iy)
    for (int ix = 0; ix < grid.nx; ++ix) {
      const Vec2 c = grid.center(ix, iy);
      centers[static_cast<std::size_t>(iy) * grid.nx + ix] = {c.x, c.y, 0.0};
    }
  const std::size_t per_position = static_cast<std::size_t>(spec.yaws) * spec.pitches * spec.fovs;
  std::vector<std::uint64_t> bits(cands.size() * words, 0);
  std::vector<char> sight(cells);
  for (std::size_t base = 0; base < cands.size(); base += per_position) {
    const Vec3 o = cands[base].position();
    for (std::size_t k = 0; k < cells; ++k) sight[k] = segment_clear_static(o, centers[k], scene) ? 1 : 0;
    for (std::size_t ci = base; ci < base + per_position; ++ci) {
      const CameraFrame cam(cands[ci]);
      std::uint64_t* row = bits.data() + ci * words;
      for (std::size_t k = 0; k < cells; ++k)
        if (sight[k] && cam.contains(centers[k])) row[k / 64] |= std::uint64_t{1} << (k % 64);
    }
  }

  CoverageBaselineResult res;
  std::vector<std::uint64_t> covered(words, 0);
  for (int pick = 0; pick < scene.num_cameras; ++pick) {
    std::size_t best = 0;
    int best_gain = -1;
    for (std::size_t ci = 0; ci < cands.size(); ++ci) {
      const std::uint64_t* row = bits.data() + ci * words;
      int gain = 0;
      for (std::size_t w = 0; w < words; ++w) gain += std::popcount(row[w] & ~covered[w]);
      if (gain > best_gain) {
        best_gain = gain;
        best = ci;
      }
    }
    const std::uint64_t* row = bits.data() + best * words;
    for (std::size_t w = 0; w < words; ++w) covered[w] |= row[w];
    res.cameras.push_back(cands[best]);
    res.picks.push_back(best);
    res.gains.push_back(best_gain);
  }
  res.train_score = coverage_grid(scene, res.cameras).covered_fraction();
  if (evaluate) {
    const auto test_idx = frame_indices(scene, Split::kTest);
    res.test = evaluate_config(scene, res.cameras, test_idx, master_seed, params);
  }
  return res;
}

}  // namespace camsearch
