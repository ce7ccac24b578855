#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "camsearch/error.hpp"
#include "camsearch/scene.hpp"
#include "camsearch/visibility.hpp"

namespace camsearch {

/// Constants of the surrogate multi-view detector.
struct DetectorParams {
  double threshold = 0.5;       // aggregate score needed to emit a detection
  double match_radius = 0.5;    // meters
  double max_displacement = 1.0;  // meters of depth error with no second view
  double px_floor = 20.0;       // resolution factor is 0 at or below this height
  double px_full = 60.0;        // and 1 at or above this one
};

enum class MatchMode { kGreedy, kOptimal };

inline double resolution_factor(double pixel_h, const DetectorParams& p = {}) {
  return std::clamp((pixel_h - p.px_floor) / (p.px_full - p.px_floor), 0.0, 1.0);
}

inline double camera_confidence(const CameraFrame& cam, std::size_t target_index, const Frame& frame,
                                const Scene& scene, const DetectorParams& params = {}) {
  const double vis = visible_fraction(cam, target_index, frame, scene);
  if (vis == 0.0) return 0.0;
  return vis * resolution_factor(pixel_height(cam, frame.pedestrians[target_index]), params);
}

inline double camera_confidence(const CameraConfig& config, const Pedestrian& target, const Frame& frame,
                                const Scene& scene, const DetectorParams& params = {}) {
  const double vis = visible_fraction(config, target, frame, scene);
  if (vis == 0.0) return 0.0;
  return vis * resolution_factor(pixel_height(config, target), params);
}

struct DetectionResult {
  std::vector<Vec2> predictions;
  std::vector<int> prediction_source;       // pedestrian index of each prediction
  std::vector<double> scores;               // aggregate score per pedestrian
  std::vector<std::vector<double>> confidence;  // [pedestrian][camera]
};

/// Fuses per-view confidences of one pedestrian into a detection, or nothing.
/// Writes the predicted ground position into `out` when detected.
inline bool fuse_views(std::span<const double> u, Vec2 truth, std::span<const CameraFrame> cams,
                       const DetectorParams& params, double& score, Vec2& out) {
  double miss = 1.0;
  std::size_t best = 0;
  for (std::size_t c = 0; c < u.size(); ++c) {
    miss *= 1.0 - u[c];
    if (u[c] > u[best]) best = c;
  }
  score = 1.0 - miss;
  if (score < params.threshold) return false;

  double second = 0.0;
  for (std::size_t c = 0; c < u.size(); ++c)
    if (c != best) second = std::max(second, u[c]);
  const double e = params.max_displacement * (1.0 - second);

  double dx = truth.x - cams[best].origin.x;
  double dy = truth.y - cams[best].origin.y;
  const double len = std::hypot(dx, dy);
  if (len > 0.0) {
    dx /= len;
    dy /= len;
  } else {
    dx = 1.0;
    dy = 0.0;
  }
  out = {truth.x + e * dx, truth.y + e * dy};
  return true;
}

inline DetectionResult detect(const Frame& frame, std::span<const CameraConfig> configs, const Scene& scene,
                              const DetectorParams& params = {}) {
  if (configs.empty()) throw Error(errc::kEmptyCameras, "detect requires at least one camera");
  std::vector<CameraFrame> cams;
  cams.reserve(configs.size());
  for (const auto& c : configs) cams.emplace_back(c);

  DetectionResult r;
  r.scores.resize(frame.pedestrians.size());
  r.confidence.resize(frame.pedestrians.size());
  for (std::size_t i = 0; i < frame.pedestrians.size(); ++i) {
    auto& u = r.confidence[i];
    u.resize(cams.size());
    for (std::size_t c = 0; c < cams.size(); ++c) u[c] = camera_confidence(cams[c], i, frame, scene, params);
    Vec2 pred;
    if (fuse_views(u, frame.pedestrians[i].position, cams, params, r.scores[i], pred)) {
      r.predictions.push_back(pred);
      r.prediction_source.push_back(static_cast<int>(i));
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Matching

struct MatchResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<std::pair<int, int>> pairs;  // (prediction, ground truth)
  std::vector<double> distances;           // per accepted pair
};

/// Greedy assignment in ascending distance order; ties resolve by
/// (prediction index, ground-truth index).
inline MatchResult match_greedy(std::span<const Vec2> predictions, std::span<const Vec2> truth,
                                double radius = 0.5) {
  struct Candidate {
    double d;
    int p;
    int g;
  };
  std::vector<Candidate> cands;
  for (int p = 0; p < static_cast<int>(predictions.size()); ++p) {
    for (int g = 0; g < static_cast<int>(truth.size()); ++g) {
      const double d = std::hypot(predictions[p].x - truth[g].x, predictions[p].y - truth[g].y);
      if (d <= radius) cands.push_back({d, p, g});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.d != b.d) return a.d < b.d;
    if (a.p != b.p) return a.p < b.p;
    return a.g < b.g;
  });
  std::vector<char> used_p(predictions.size(), 0);
  std::vector<char> used_g(truth.size(), 0);
  MatchResult m;
  for (const Candidate& c : cands) {
    if (used_p[c.p] || used_g[c.g]) continue;
    used_p[c.p] = used_g[c.g] = 1;
    m.pairs.emplace_back(c.p, c.g);
    m.distances.push_back(c.d);
  }
  m.tp = static_cast<int>(m.pairs.size());
  m.fp = static_cast<int>(predictions.size()) - m.tp;
  m.fn = static_cast<int>(truth.size()) - m.tp;
  return m;
}

/// Maximum-cardinality assignment within the radius (augmenting paths).
inline MatchResult match_optimal(std::span<const Vec2> predictions, std::span<const Vec2> truth,
                                 double radius = 0.5) {
  const int np = static_cast<int>(predictions.size());
  const int ng = static_cast<int>(truth.size());
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(np));
  auto dist = [&](int p, int g) {
    return std::hypot(predictions[p].x - truth[g].x, predictions[p].y - truth[g].y);
  };
  for (int p = 0; p < np; ++p)
    for (int g = 0; g < ng; ++g)
      if (dist(p, g) <= radius) adj[p].push_back(g);

  std::vector<int> owner(static_cast<std::size_t>(ng), -1);
  std::vector<char> seen;
  auto augment = [&](auto&& self, int p) -> bool {
    for (int g : adj[p]) {
      if (seen[g]) continue;
      seen[g] = 1;
      if (owner[g] < 0 || self(self, owner[g])) {
        owner[g] = p;
        return true;
      }
    }
    return false;
  };
  for (int p = 0; p < np; ++p) {
    seen.assign(static_cast<std::size_t>(ng), 0);
    augment(augment, p);
  }
  MatchResult m;
  for (int g = 0; g < ng; ++g) {
    if (owner[g] < 0) continue;
    m.pairs.emplace_back(owner[g], g);
    m.distances.push_back(dist(owner[g], g));
  }
  m.tp = static_cast<int>(m.pairs.size());
  m.fp = np - m.tp;
  m.fn = ng - m.tp;
  return m;
}

inline MatchResult match(std::span<const Vec2> predictions, std::span<const Vec2> truth, double radius = 0.5,
                         MatchMode mode = MatchMode::kGreedy) {
  return mode == MatchMode::kGreedy ? match_greedy(predictions, truth, radius)
                                    : match_optimal(predictions, truth, radius);
}

// ---------------------------------------------------------------------------
// Scoring

struct FrameReport {
  int index = 0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  std::vector<double> match_distances;
};

struct EvalReport {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double moda = 0.0;
  double modp = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::vector<FrameReport> frames;

  int num_ground_truth() const { return tp + fn; }
};

/// Pairwise (cascade) summation; result independent of thread partitioning
/// as long as the element order is fixed.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) return std::accumulate(v.begin(), v.end(), 0.0);
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline EvalReport score(std::vector<FrameReport> frames, double match_radius = 0.5) {
  if (frames.empty()) throw Error(errc::kEmptyEvaluation, "empty evaluation set");
  EvalReport r;
  std::vector<double> quality;
  for (const FrameReport& f : frames) {
    r.tp += f.tp;
    r.fp += f.fp;
    r.fn += f.fn;
    for (double d : f.match_distances) quality.push_back(1.0 - d / match_radius);
  }
  const int n_gt = r.tp + r.fn;
  if (n_gt == 0) throw Error(errc::kEmptyEvaluation, "empty evaluation set");
  r.moda = 1.0 - static_cast<double>(r.fn + r.fp) / n_gt;
  r.recall = static_cast<double>(r.tp) / n_gt;
  r.precision = r.tp + r.fp > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
  r.modp = quality.empty() ? 0.0 : pairwise_sum(quality) / static_cast<double>(quality.size());
  r.frames = std::move(frames);
  return r;
}

inline FrameReport evaluate_frame(const Frame& frame, std::span<const CameraConfig> configs, const Scene& scene,
                                  const DetectorParams& params = {}, MatchMode mode = MatchMode::kGreedy) {
  const DetectionResult det = detect(frame, configs, scene, params);
  std::vector<Vec2> truth;
  truth.reserve(frame.pedestrians.size());
  for (const auto& p : frame.pedestrians) truth.push_back(p.position);
  MatchResult m = match(det.predictions, truth, params.match_radius, mode);
  return {frame.index, m.tp, m.fp, m.fn, std::move(m.distances)};
}

/// Evaluates on already-sampled frames (the frames must come from
/// sample_frame for the same scene and seed).
inline EvalReport evaluate_frames(const Scene& scene, std::span<const CameraConfig> configs,
                                  std::span<const Frame* const> frames, const DetectorParams& params = {},
                                  MatchMode mode = MatchMode::kGreedy) {
  if (configs.empty()) throw Error(errc::kEmptyCameras, "evaluation requires at least one camera");
  std::vector<FrameReport> reports;
  reports.reserve(frames.size());
  for (const Frame* f : frames) reports.push_back(evaluate_frame(*f, configs, scene, params, mode));
  return score(std::move(reports), params.match_radius);
}

inline EvalReport evaluate_config(const Scene& scene, std::span<const CameraConfig> configs,
                                  std::span<const int> frame_indices, std::uint64_t master_seed,
                                  const DetectorParams& params = {}, MatchMode mode = MatchMode::kGreedy) {
  if (configs.empty()) throw Error(errc::kEmptyCameras, "evaluation requires at least one camera");
  std::vector<Frame> frames;
  frames.reserve(frame_indices.size());
  for (int i : frame_indices) frames.push_back(sample_frame(scene, master_seed, i));
  std::vector<const Frame*> ptrs;
  for (const auto& f : frames) ptrs.push_back(&f);
  return evaluate_frames(scene, configs, ptrs, params, mode);
}

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (const FrameReport& f : r.frames)
    frames.push_back({{"index", f.index}, {"tp", f.tp}, {"fp", f.fp}, {"fn", f.fn}});
  return {{"moda", r.moda},           {"modp", r.modp}, {"precision", r.precision},
          {"recall", r.recall},       {"tp", r.tp},     {"fp", r.fp},
          {"fn", r.fn},               {"frames", frames}};
}

}  // namespace camsearch
