#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "camsearch/checkpoint.hpp"
#include "camsearch/generator.hpp"
#include "gradcheck.hpp"

using namespace camsearch;
namespace ct = camsearch::testing;

namespace {

std::string code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.scene_hash = 0x1234abcdULL;
  c.num_cameras = 3;
  c.step = 4096;
  c.episode = 1365;
  c.rng_states = {{11, 5}, {12, 900}};
  c.params = {0.5f, -1.25f, 3.0f, 0.0f};
  c.adam_step = 32;
  c.adam_m = {0.1f, 0.2f, 0.3f, 0.4f};
  c.adam_v = {1e-3f, 2e-3f, 3e-3f, 4e-3f};
  return c;
}

}  // namespace

TEST(Fnv1a, KnownValues) {
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Checkpoint, SerializeRoundTrip) {
  const Checkpoint c = sample_checkpoint();
  const auto bytes = serialize(c);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "SLCK");
  EXPECT_EQ(deserialize(bytes), c);
}

TEST(Checkpoint, LayoutSize) {
  const Checkpoint c = sample_checkpoint();
  // magic, version, hash, N, step, episode, n_rng, pairs, n_params, params,
  // adam step, n_moments, m, v
  const std::size_t expected = 4 + 4 + 8 + 4 + 8 + 8 + 4 + 2 * 16 + 8 + 4 * 4 + 8 + 8 + 4 * 4 + 4 * 4;
  EXPECT_EQ(serialize(c).size(), expected);
}

TEST(Checkpoint, RejectsBadMagic) {
  auto bytes = serialize(sample_checkpoint());
  bytes[0] = 'X';
  EXPECT_EQ(code_of([&] { deserialize(bytes); }), errc::kBadCheckpoint);
}

TEST(Checkpoint, RejectsUnknownVersion) {
  auto bytes = serialize(sample_checkpoint());
  bytes[4] = 9;
  EXPECT_EQ(code_of([&] { deserialize(bytes); }), errc::kBadCheckpoint);
}

TEST(Checkpoint, RejectsTruncation) {
  const auto bytes = serialize(sample_checkpoint());
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() - 1}) {
    const std::vector<char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_EQ(code_of([&] { deserialize(cut); }), errc::kBadCheckpoint) << n;
  }
}

TEST(Checkpoint, RejectsTrailingBytes) {
  auto bytes = serialize(sample_checkpoint());
  bytes.push_back(0);
  EXPECT_EQ(code_of([&] { deserialize(bytes); }), errc::kBadCheckpoint);
}

TEST(Checkpoint, FileRoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / ("camsearch_ck_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(c, dir / "a.slck");
  EXPECT_EQ(load_checkpoint(dir / "a.slck"), c);
  EXPECT_EQ(code_of([&] { save_checkpoint(c, dir / "missing" / "b.slck"); }), errc::kIo);
  EXPECT_FALSE(code_of([&] { load_checkpoint(dir / "nope.slck"); }).empty());
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, GeneratorParametersAndAdamRestore) {
  const auto cfg = ct::small_generator_config(3);
  Generator a(cfg, ct::unit_config_space(), 1), b(cfg, ct::unit_config_space(), 2);
  auto pa = a.parameters(), pb = b.parameters();
  nn::AdamState adam;
  adam.step = 7;
  for (const auto* p : pa) {
    adam.m.emplace_back(p->size(), 0.25);
    adam.v.emplace_back(p->size(), 0.5);
  }
  const Checkpoint c = make_checkpoint(pa, adam, 99, 3, 10, 3, {CounterRng(1), CounterRng(2)});
  const Checkpoint back = deserialize(serialize(c));

  nn::AdamState restored;
  apply_checkpoint(back, pb, &restored);
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t k = 0; k < pa[i]->size(); ++k)
      EXPECT_EQ(static_cast<float>(pa[i]->value[k]), static_cast<float>(pb[i]->value[k]));
  EXPECT_EQ(restored.step, 7);
  ASSERT_EQ(restored.m.size(), pa.size());
  EXPECT_DOUBLE_EQ(restored.m.back().front(), 0.25);
  EXPECT_DOUBLE_EQ(restored.v.front().back(), 0.5);
  EXPECT_EQ(back.rng_states.size(), 2u);
}

TEST(Checkpoint, ParameterCountMismatch) {
  Generator gen(ct::small_generator_config(3), ct::unit_config_space(), 1);
  auto ps = gen.parameters();
  Checkpoint c = make_checkpoint(ps, nn::AdamState{}, 0, 3, 0, 0, {});
  c.params.pop_back();
  EXPECT_EQ(code_of([&] { apply_checkpoint(c, ps, nullptr); }), errc::kBadCheckpoint);
  Checkpoint moments = make_checkpoint(ps, nn::AdamState{}, 0, 3, 0, 0, {});
  moments.adam_m = {1.0f};
  moments.adam_v = {1.0f};
  nn::AdamState adam;
  EXPECT_EQ(code_of([&] { apply_checkpoint(moments, ps, &adam); }), errc::kBadCheckpoint);
}
