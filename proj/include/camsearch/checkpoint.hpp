#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "camsearch/error.hpp"
#include "camsearch/nn/adam.hpp"
#include "camsearch/nn/tensor.hpp"
#include "camsearch/rng.hpp"

namespace camsearch {

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Binary layout, little-endian:
//   "SLCK" | u32 version | u64 scene_hash | u32 N | u64 step | u64 episode
//   | u32 n_rng | n_rng x (u64 key, u64 counter)
//   | u64 n_params | f32 x n_params
//   | i64 adam_step | u64 n_moments | f32 x n_moments (m) | f32 x n_moments (v)
// Parameters are flattened in the generator's declaration order.
struct Checkpoint {
  static constexpr std::array<char, 4> kMagic{'S', 'L', 'C', 'K'};
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  std::uint64_t scene_hash = 0;
  std::uint32_t num_cameras = 0;
  std::uint64_t step = 0;
  std::uint64_t episode = 0;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> rng_states;
  std::vector<float> params;
  std::int64_t adam_step = 0;
  std::vector<float> adam_m;
  std::vector<float> adam_v;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline Checkpoint make_checkpoint(std::span<nn::Parameter* const> params, const nn::AdamState& adam,
                                  std::uint64_t scene_hash, std::uint32_t num_cameras, std::uint64_t step,
                                  std::uint64_t episode, std::vector<CounterRng> rngs) {
  Checkpoint c;
  c.scene_hash = scene_hash;
  c.num_cameras = num_cameras;
  c.step = step;
  c.episode = episode;
  for (const auto& r : rngs) c.rng_states.emplace_back(r.key(), r.counter());
  for (const nn::Parameter* p : params)
    for (double v : p->value) c.params.push_back(static_cast<float>(v));
  c.adam_step = adam.step;
  for (std::size_t i = 0; i < adam.m.size(); ++i) {
    for (double v : adam.m[i]) c.adam_m.push_back(static_cast<float>(v));
    for (double v : adam.v[i]) c.adam_v.push_back(static_cast<float>(v));
  }
  return c;
}

/// Writes checkpoint parameters (and Adam moments, when present) back.
inline void apply_checkpoint(const Checkpoint& c, std::span<nn::Parameter* const> params, nn::AdamState* adam) {
  std::size_t total = 0;
  for (const nn::Parameter* p : params) total += p->size();
  if (total != c.params.size())
    throw Error(errc::kBadCheckpoint, "checkpoint holds " + std::to_string(c.params.size()) +
                                          " parameters, model expects " + std::to_string(total));
  std::size_t k = 0;
  for (nn::Parameter* p : params)
    for (double& v : p->value) v = static_cast<double>(c.params[k++]);
  if (!adam) return;
  adam->step = c.adam_step;
  adam->m.clear();
  adam->v.clear();
  if (c.adam_m.empty()) return;
  if (c.adam_m.size() != total || c.adam_v.size() != total)
    throw Error(errc::kBadCheckpoint, "checkpoint Adam moments do not match parameter count");
  k = 0;
  for (const nn::Parameter* p : params) {
    adam->m.emplace_back(c.adam_m.begin() + static_cast<std::ptrdiff_t>(k),
                         c.adam_m.begin() + static_cast<std::ptrdiff_t>(k + p->size()));
    adam->v.emplace_back(c.adam_v.begin() + static_cast<std::ptrdiff_t>(k),
                         c.adam_v.begin() + static_cast<std::ptrdiff_t>(k + p->size()));
    k += p->size();
  }
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<char>& out, T v) {
  const auto* b = reinterpret_cast<const char*>(&v);
  out.insert(out.end(), b, b + sizeof(T));
}

template <typename T>
void put_array(std::vector<char>& out, const std::vector<T>& v) {
  const auto* b = reinterpret_cast<const char*>(v.data());
  out.insert(out.end(), b, b + v.size() * sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::vector<char>& buf) : buf_(buf) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  template <typename T>
  std::vector<T> get_array(std::uint64_t n) {
    if (n > (buf_.size() - pos_) / sizeof(T)) truncated();
    std::vector<T> v(static_cast<std::size_t>(n));
    std::memcpy(v.data(), buf_.data() + pos_, static_cast<std::size_t>(n) * sizeof(T));
    pos_ += static_cast<std::size_t>(n) * sizeof(T);
    return v;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) truncated();
  }
  [[noreturn]] static void truncated() { throw Error(errc::kBadCheckpoint, "checkpoint is truncated"); }

  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> serialize(const Checkpoint& c) {
  std::vector<char> out(Checkpoint::kMagic.begin(), Checkpoint::kMagic.end());
  detail::put(out, c.version);
  detail::put(out, c.scene_hash);
  detail::put(out, c.num_cameras);
  detail::put(out, c.step);
  detail::put(out, c.episode);
  detail::put(out, static_cast<std::uint32_t>(c.rng_states.size()));
  for (const auto& [key, counter] : c.rng_states) {
    detail::put(out, key);
    detail::put(out, counter);
  }
  detail::put(out, static_cast<std::uint64_t>(c.params.size()));
  detail::put_array(out, c.params);
  detail::put(out, c.adam_step);
  detail::put(out, static_cast<std::uint64_t>(c.adam_m.size()));
  detail::put_array(out, c.adam_m);
  detail::put_array(out, c.adam_v);
  return out;
}

inline Checkpoint deserialize(const std::vector<char>& buf) {
  if (buf.size() < 4 || !std::equal(Checkpoint::kMagic.begin(), Checkpoint::kMagic.end(), buf.begin()))
    throw Error(errc::kBadCheckpoint, "not a checkpoint (bad magic)");
  std::vector<char> body(buf.begin() + 4, buf.end());
  detail::Reader r(body);
  Checkpoint c;
  c.version = r.get<std::uint32_t>();
  if (c.version != Checkpoint::kVersion)
    throw Error(errc::kBadCheckpoint, "unsupported checkpoint version " + std::to_string(c.version));
  c.scene_hash = r.get<std::uint64_t>();
  c.num_cameras = r.get<std::uint32_t>();
  c.step = r.get<std::uint64_t>();
  c.episode = r.get<std::uint64_t>();
  const auto n_rng = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_rng; ++i) {
    const auto key = r.get<std::uint64_t>();
    const auto counter = r.get<std::uint64_t>();
    c.rng_states.emplace_back(key, counter);
  }
  c.params = r.get_array<float>(r.get<std::uint64_t>());
  c.adam_step = r.get<std::int64_t>();
  const auto n_mom = r.get<std::uint64_t>();
  c.adam_m = r.get_array<float>(n_mom);
  c.adam_v = r.get_array<float>(n_mom);
  if (!r.done()) throw Error(errc::kBadCheckpoint, "trailing bytes after checkpoint");
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const auto bytes = serialize(c);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(errc::kIo, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(errc::kIo, "cannot read checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace camsearch
