#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "camsearch/catalog.hpp"
#include "camsearch/evaluation.hpp"
#include "support.hpp"

using namespace camsearch;
using camsearch::testing::frame_of;
using camsearch::testing::open_scene;

namespace {

/// Brute-force maximum matching over all injective assignments.
int brute_force_tp(const std::vector<Vec2>& pred, const std::vector<Vec2>& gt, double radius) {
  const bool swap = pred.size() > gt.size();
  const auto& a = swap ? gt : pred;
  const auto& b = swap ? pred : gt;
  std::vector<int> idx(b.size());
  std::iota(idx.begin(), idx.end(), 0);
  int best = 0;
  do {
    int tp = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      tp += std::hypot(a[i].x - b[idx[i]].x, a[i].y - b[idx[i]].y) <= radius;
    best = std::max(best, tp);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return best;
}

std::vector<CameraFrame> frames_at(std::vector<CameraConfig> cfgs) {
  std::vector<CameraFrame> out;
  for (const auto& c : cfgs) out.emplace_back(c);
  return out;
}

}  // namespace

TEST(Confidence, FullyVisibleAndLargeEqualsVisibility) {
  const Scene s = open_scene();
  const CameraConfig cam{0.0, 5.0, 1.0, 0.0, 0.0, kPi / 2.0};
  const Frame f = frame_of({{4.0, 5.0}});
  ASSERT_GE(pixel_height(cam, f.pedestrians[0]), 60.0);
  EXPECT_DOUBLE_EQ(camera_confidence(cam, f.pedestrians[0], f, s),
                   visible_fraction(cam, f.pedestrians[0], f, s));
}

TEST(Confidence, TinyTargetHasZeroConfidence) {
  Scene s = open_scene(200.0);
  const CameraConfig cam{0.0, 5.0, 0.85, 0.0, 0.0, kPi / 2.0};
  const Frame f = frame_of({{150.0, 5.0}});
  ASSERT_LE(pixel_height(cam, f.pedestrians[0]), 20.0);
  EXPECT_EQ(camera_confidence(cam, f.pedestrians[0], f, s), 0.0);
}

TEST(Confidence, PartialVisibilityTimesHalfResolution) {
  // Distance at which the pedestrian spans exactly 40 px, with a low box in
  // front hiding the two lowest axial samples.
  const double d = 0.85 / std::tan(40.0 * vertical_fov(kPi / 2.0) / (2.0 * 720.0));
  Scene s = open_scene(40.0);
  s.obstacles.push_back({{d - 0.6, 4.0, 0.0}, {d - 0.4, 6.0, 0.7}});
  const CameraConfig cam{0.0, 5.0, 0.85, 0.0, 0.0, kPi / 2.0};
  const Frame f = frame_of({{d, 5.0}});
  EXPECT_NEAR(pixel_height(cam, f.pedestrians[0]), 40.0, 1e-9);
  EXPECT_DOUBLE_EQ(visible_fraction(cam, f.pedestrians[0], f, s), 0.6);
  EXPECT_NEAR(camera_confidence(cam, f.pedestrians[0], f, s), 0.30, 1e-9);
}

TEST(Fusion, TwoPerfectViewsLocalizeExactly) {
  const auto cams = frames_at({{0, 0, 3, 0, 0, 1.5}, {10, 0, 3, kPi, 0, 1.5}});
  const std::vector<double> u{1.0, 1.0};
  double score = 0;
  Vec2 out;
  ASSERT_TRUE(fuse_views(u, {5.0, 5.0}, cams, {}, score, out));
  EXPECT_EQ(score, 1.0);
  EXPECT_EQ(out.x, 5.0);
  EXPECT_EQ(out.y, 5.0);
}

TEST(Fusion, SingleWeakViewIsNotDetected) {
  const auto cams = frames_at({{0, 0, 3, 0, 0, 1.5}});
  const std::vector<double> u{0.4};
  double score = 0;
  Vec2 out;
  EXPECT_FALSE(fuse_views(u, {5.0, 5.0}, cams, {}, score, out));
  EXPECT_DOUBLE_EQ(score, 0.4);
}

TEST(Fusion, StrongPlusWeakViewMissesTheMatch) {
  const auto cams = frames_at({{0, 5, 3, 0, 0, 1.5}, {5, 0, 3, kPi / 2, 0, 1.5}});
  const std::vector<double> u{0.9, 0.2};
  const Vec2 truth{5.0, 5.0};
  double score = 0;
  Vec2 out;
  ASSERT_TRUE(fuse_views(u, truth, cams, {}, score, out));
  EXPECT_NEAR(score, 0.92, 1e-15);
  // Pushed 0.8 m along the ray from the best camera (which sits at y = 5).
  EXPECT_NEAR(out.x, 5.8, 1e-12);
  EXPECT_NEAR(out.y, 5.0, 1e-12);
  const std::vector<Vec2> pred{out}, gt{truth};
  const MatchResult m = match(pred, gt);
  EXPECT_EQ(m.tp, 0);
  EXPECT_EQ(m.fp, 1);
  EXPECT_EQ(m.fn, 1);
}

TEST(Detect, ZeroCamerasIsAnError) {
  const Scene s = open_scene();
  try {
    detect(frame_of({{1, 1}}), {}, s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kEmptyCameras);
  }
}

TEST(Detect, AppendingCameraNeverLowersScores) {
  const Scene s = load_scene(kBundledSceneDir / "market.json");
  const Frame f = sample_frame(s, 2, 5);
  std::vector<CameraConfig> cams{{13.0, 5.0, 4.0, kPi, -0.4, 1.5}};
  const DetectionResult one = detect(f, cams, s);
  cams.push_back({12.0, 3.5, 4.5, 2.7, -0.3, 1.2});
  const DetectionResult two = detect(f, cams, s);
  for (std::size_t i = 0; i < f.pedestrians.size(); ++i) EXPECT_GE(two.scores[i], one.scores[i]);
  EXPECT_GE(two.predictions.size(), one.predictions.size());
}

TEST(Match, IdenticalSetsMatchFully) {
  const std::vector<Vec2> pts{{0, 0}, {1, 1}, {2, 0}, {3, 3}};
  for (auto mode : {MatchMode::kGreedy, MatchMode::kOptimal}) {
    const MatchResult m = match(pts, pts, 0.5, mode);
    EXPECT_EQ(m.tp, 4);
    EXPECT_EQ(m.fp, 0);
    EXPECT_EQ(m.fn, 0);
  }
}

TEST(Match, EmptyPredictionsAreAllMisses) {
  const std::vector<Vec2> gt{{0, 0}, {1, 1}, {2, 0}, {3, 3}, {4, 4}};
  const MatchResult m = match({}, gt);
  EXPECT_EQ(m.tp, 0);
  EXPECT_EQ(m.fp, 0);
  EXPECT_EQ(m.fn, 5);
}

TEST(Match, CrossingPatternAgreesWithExhaustiveOracle) {
  const std::vector<Vec2> gt{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const std::vector<Vec2> pred{{0.9, 0.1}, {0.1, 0.1}, {0.9, 0.9}, {0.1, 0.9}};
  const MatchResult g = match_greedy(pred, gt);
  EXPECT_EQ(g.tp, brute_force_tp(pred, gt, 0.5));
  EXPECT_EQ(g.tp, match_optimal(pred, gt).tp);
  EXPECT_EQ(g.tp, 4);
}

TEST(Match, GreedyCanLoseOneToOptimal) {
  // Greedy grabs the closest pair (p0, g1) and strands p1.
  const std::vector<Vec2> pred{{0.4, 0}, {0.9, 0}};
  const std::vector<Vec2> gt{{0, 0}, {0.45, 0}};
  EXPECT_EQ(match_greedy(pred, gt).tp, 1);
  EXPECT_EQ(match_optimal(pred, gt).tp, 2);
}

TEST(Match, ValidityAndGreedyAgreement) {
  CounterRng rng(2024, 0);
  int agree = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int np = static_cast<int>(rng.uniform_int(0, 6));
    const int ng = static_cast<int>(rng.uniform_int(0, 6));
    std::vector<Vec2> pred, gt;
    for (int i = 0; i < np; ++i) pred.push_back({rng.uniform(0, 2), rng.uniform(0, 2)});
    for (int i = 0; i < ng; ++i) gt.push_back({rng.uniform(0, 2), rng.uniform(0, 2)});
    const MatchResult g = match_greedy(pred, gt);
    const MatchResult o = match_optimal(pred, gt);
    const int oracle = brute_force_tp(pred, gt, 0.5);
    ASSERT_EQ(o.tp, oracle);
    ASSERT_LE(oracle - g.tp, 1);
    ASSERT_GE(oracle, g.tp);
    agree += g.tp == oracle;
    for (const MatchResult* m : {&g, &o}) {
      EXPECT_EQ(m->tp + m->fp, np);
      EXPECT_EQ(m->tp + m->fn, ng);
      for (double d : m->distances) EXPECT_LE(d, 0.5);
    }
  }
  EXPECT_GE(agree, 950);
}

TEST(Score, ModaFromTotals) {
  // 20 ground truth, 17 found, 2 ghosts.
  const EvalReport r = score({{0, 10, 1, 2, {}}, {1, 7, 1, 1, {}}});
  EXPECT_DOUBLE_EQ(r.moda, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 17.0 / 20.0);
  EXPECT_DOUBLE_EQ(r.precision, 17.0 / 19.0);
}

TEST(Score, PerfectIsOne) {
  const EvalReport r = score({{0, 5, 0, 0, {}}});
  EXPECT_EQ(r.moda, 1.0);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
}

TEST(Score, ModpOfOnePairAtQuarterMeter) {
  const EvalReport r = score({{0, 1, 0, 0, {0.25}}});
  EXPECT_DOUBLE_EQ(r.modp, 0.5);
}

TEST(Score, ModaMayBeNegative) {
  const EvalReport r = score({{0, 0, 6, 2, {}}});
  EXPECT_DOUBLE_EQ(r.moda, -3.0);
  EXPECT_EQ(r.precision, 0.0);
}

TEST(Score, NoGroundTruthIsAnError) {
  try {
    score({{0, 0, 3, 0, {}}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), errc::kEmptyEvaluation);
  }
  EXPECT_THROW(score({}), Error);
}

TEST(Evaluate, OpenSceneWithFourCornerCamerasIsPerfect) {
  Scene s = open_scene(8.0, 4);
  s.max_walkers = 6;
  s.max_groups = 0;
  s.frame_count = 20;
  const double up = -0.45, fov = 2.0;
  const std::vector<CameraConfig> cams{{0, 0, 4, kPi / 4, up, fov},
                                       {8, 0, 4, 3 * kPi / 4, up, fov},
                                       {8, 8, 4, 5 * kPi / 4, up, fov},
                                       {0, 8, 4, 7 * kPi / 4, up, fov}};
  std::vector<int> all(20);
  std::iota(all.begin(), all.end(), 0);
  const EvalReport r = evaluate_config(s, cams, all, 1);
  EXPECT_EQ(r.moda, 1.0);
  EXPECT_EQ(r.fn, 0);
  EXPECT_EQ(r.fp, 0);
}

TEST(Evaluate, ZeroCamerasIsAnError) {
  const Scene s = open_scene();
  const std::vector<int> idx{0};
  EXPECT_THROW(evaluate_config(s, {}, idx, 0), Error);
}

TEST(Evaluate, IsDeterministic) {
  const Scene s = load_scene(kBundledSceneDir / "cafe.json");
  const std::vector<CameraConfig> cams{{11.0, 4.0, 3.0, 2.8, -0.35, 1.6}, {11.0, 6.0, 3.0, 3.5, -0.35, 1.6}};
  const auto idx = frame_indices(s, Split::kTest);
  const EvalReport a = evaluate_config(s, cams, idx, 5);
  const EvalReport b = evaluate_config(s, cams, idx, 5);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  EXPECT_EQ(a.moda, b.moda);
  EXPECT_EQ(a.modp, b.modp);
}

TEST(Evaluate, JsonHasDocumentedFields) {
  const EvalReport r = score({{3, 2, 1, 1, {0.1, 0.2}}});
  const auto j = report_to_json(r);
  for (const char* k : {"moda", "modp", "precision", "recall", "tp", "fp", "fn", "frames"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["frames"][0]["index"], 3);
}
