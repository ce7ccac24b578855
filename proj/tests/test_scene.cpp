#include <gtest/gtest.h>

#include <cmath>

#include "camsearch/catalog.hpp"
#include "camsearch/error.hpp"
#include "camsearch/scene.hpp"
#include "support.hpp"

using namespace camsearch;
namespace ct = camsearch::testing;

namespace {

Scene atrium() { return load_scene(kBundledSceneDir / "atrium.json"); }

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

nlohmann::json minimal_scene_json() {
  return nlohmann::json::parse(R"({
    "name": "tiny",
    "ground": {"min": [0, 0], "max": [8, 6]},
    "obstacles": [],
    "spawn": {"min": [1, 1], "max": [7, 5]},
    "config_space": {"x": [0, 8], "y": [0, 6], "z": [2, 4]},
    "num_cameras": 2, "max_walkers": 10, "max_groups": 2, "frame_count": 20
  })");
}

}  // namespace

TEST(Scene, BundledAtriumHasFourObstaclesAndFourCameras) {
  const Scene s = atrium();
  EXPECT_EQ(s.name, "atrium");
  EXPECT_EQ(s.obstacles.size(), 4u);
  EXPECT_EQ(s.num_cameras, 4);
}

TEST(Scene, AllBundledScenesValidate) {
  const auto entries = SceneCatalog().list();
  ASSERT_EQ(entries.size(), 3u);
  for (const auto& e : entries) EXPECT_NO_THROW(load_scene(e.path)) << e.name;
}

TEST(Scene, FovRangeBelowLimitIsRejected) {
  auto j = minimal_scene_json();
  const double deg = kPi / 180.0;
  j["config_space"]["fov"] = {10 * deg, 20 * deg};
  EXPECT_EQ(code_of([&] { parse_scene(j.dump()); }), errc::kValidation);
}

TEST(Scene, EmptyObstacleListIsValid) {
  const Scene s = parse_scene(minimal_scene_json().dump());
  EXPECT_TRUE(s.obstacles.empty());
}

TEST(Scene, MissingFieldIsParseError) {
  auto j = minimal_scene_json();
  j.erase("ground");
  EXPECT_EQ(code_of([&] { parse_scene(j.dump()); }), errc::kParse);
}

TEST(Scene, MissingFileIsSceneNotFound) {
  EXPECT_EQ(code_of([] { load_scene("/nonexistent/nowhere.json"); }), errc::kSceneNotFound);
}

TEST(Scene, JsonRoundTrip) {
  const Scene s = atrium();
  const Scene t = scene_from_json(scene_to_json(s));
  EXPECT_EQ(scene_to_json(t).dump(), scene_to_json(s).dump());
}

TEST(Scene, SampleFrameIsDeterministic) {
  const Scene s = atrium();
  const Frame a = sample_frame(s, 7, 0);
  const Frame b = sample_frame(s, 7, 0);
  ASSERT_EQ(a.pedestrians.size(), b.pedestrians.size());
  for (std::size_t i = 0; i < a.pedestrians.size(); ++i) {
    EXPECT_EQ(a.pedestrians[i].position.x, b.pedestrians[i].position.x);
    EXPECT_EQ(a.pedestrians[i].position.y, b.pedestrians[i].position.y);
  }
}

TEST(Scene, DifferentSeedsGiveDifferentFrames) {
  const Scene s = atrium();
  const Frame a = sample_frame(s, 7, 0);
  const Frame b = sample_frame(s, 8, 0);
  bool differ = a.pedestrians.size() != b.pedestrians.size();
  for (std::size_t i = 0; !differ && i < a.pedestrians.size(); ++i)
    differ = a.pedestrians[i].position.x != b.pedestrians[i].position.x ||
             a.pedestrians[i].position.y != b.pedestrians[i].position.y;
  EXPECT_TRUE(differ);
}

TEST(Scene, FramesAreIndependentOfSamplingOrder) {
  const Scene s = atrium();
  const Frame late = sample_frame(s, 3, 17);
  const auto all = sample_all_frames(s, 3);
  ASSERT_EQ(all[17].pedestrians.size(), late.pedestrians.size());
  for (std::size_t i = 0; i < late.pedestrians.size(); ++i)
    EXPECT_EQ(all[17].pedestrians[i].position.x, late.pedestrians[i].position.x);
}

TEST(Scene, TinySpawnIsOverDense) {
  Scene s = ct::open_scene();
  s.spawn = {{5.0, 5.0}, {5.1, 5.1}};
  s.max_walkers = 4;
  s.max_groups = 0;
  EXPECT_EQ(code_of([&] { sample_frame(s, 0, 0); }), errc::kOverDense);
}

TEST(Scene, FramePropertiesHoldOnAllBundledScenes) {
  for (const auto& e : SceneCatalog().list()) {
    const Scene s = load_scene(e.path);
    for (int i = 0; i < 40; ++i) {
      const Frame f = sample_frame(s, 11, i);
      EXPECT_GE(static_cast<int>(f.pedestrians.size()), s.max_walkers / 2);
      for (std::size_t a = 0; a < f.pedestrians.size(); ++a) {
        const Vec2 p = f.pedestrians[a].position;
        EXPECT_GE(p.x, s.spawn.min.x);
        EXPECT_LE(p.x, s.spawn.max.x);
        EXPECT_GE(p.y, s.spawn.min.y);
        EXPECT_LE(p.y, s.spawn.max.y);
        for (std::size_t b = a + 1; b < f.pedestrians.size(); ++b) {
          const Vec2 q = f.pedestrians[b].position;
          EXPECT_GE(std::hypot(p.x - q.x, p.y - q.y), 0.5 - 1e-12);
        }
        for (const Box& box : s.obstacles) {
          const double dx = std::max({box.min.x - p.x, 0.0, p.x - box.max.x});
          const double dy = std::max({box.min.y - p.y, 0.0, p.y - box.max.y});
          EXPECT_GE(std::hypot(dx, dy), Pedestrian::kRadius - 1e-12);
        }
      }
    }
  }
}

TEST(Scene, SplitIs360Over40) {
  const Scene s = atrium();
  const auto train = frame_indices(s, Split::kTrain);
  const auto test = frame_indices(s, Split::kTest);
  EXPECT_EQ(train.size(), 360u);
  EXPECT_EQ(test.size(), 40u);
  EXPECT_EQ(train.back() + 1, test.front());
}

TEST(Scene, NormalizeXyExamples) {
  const Scene s = atrium();
  const Vec2 c = normalize_xy(s, s.ground.center().x, s.ground.center().y);
  EXPECT_NEAR(c.x, 0.0, 1e-15);
  EXPECT_NEAR(c.y, 0.0, 1e-15);
  const Vec2 m = normalize_xy(s, s.ground.max.x, s.ground.max.y);
  EXPECT_DOUBLE_EQ(m.x, 1.0);
  EXPECT_DOUBLE_EQ(m.y, 1.0);
  const Vec2 e = normalize_xy(s, s.ground.max.x, s.ground.center().y);
  EXPECT_DOUBLE_EQ(e.x, 1.0);
  EXPECT_NEAR(e.y, 0.0, 1e-15);
}

TEST(Scene, NormalizeXyIsAffine) {
  const Scene s = load_scene(kBundledSceneDir / "market.json");
  CounterRng rng(42, 0);
  for (int t = 0; t < 200; ++t) {
    const Vec2 a{rng.uniform(-5, 20), rng.uniform(-5, 20)};
    const Vec2 b{rng.uniform(-5, 20), rng.uniform(-5, 20)};
    const double l = rng.uniform();
    const Vec2 mix = normalize_xy(s, l * a.x + (1 - l) * b.x, l * a.y + (1 - l) * b.y);
    const Vec2 na = normalize_xy(s, a.x, a.y), nb = normalize_xy(s, b.x, b.y);
    EXPECT_NEAR(mix.x, l * na.x + (1 - l) * nb.x, 1e-12);
    EXPECT_NEAR(mix.y, l * na.y + (1 - l) * nb.y, 1e-12);
  }
}

TEST(Scene, EmbeddingIsSevenVectorWithUnitYaw) {
  CounterRng rng(1, 2);
  for (int t = 0; t < 100; ++t) {
    const CameraConfig c{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(1, 4),
                         rng.uniform(0, kTwoPi), rng.uniform(-0.5, 0.5), rng.uniform(0.6, 2.0)};
    const auto e = c.to_embedding();
    EXPECT_EQ(e[0], c.x);
    EXPECT_EQ(e[1], c.y);
    EXPECT_EQ(e[2], c.z);
    EXPECT_NEAR(e[3] * e[3] + e[4] * e[4], 1.0, 1e-12);
    EXPECT_EQ(e[5], c.pitch);
    EXPECT_EQ(e[6], c.fov);
  }
}
