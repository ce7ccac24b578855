#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "camsearch/error.hpp"
#include "camsearch/nn/layers.hpp"
#include "camsearch/nn/tensor.hpp"
#include "camsearch/rng.hpp"
#include "camsearch/scene.hpp"

namespace camsearch {

inline constexpr std::size_t kActionDims = 6;  // x, y, z, yaw, pitch, fov
inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Cameras placed so far (t of them) out of a budget of N.
struct EpisodeState {
  std::vector<CameraConfig> placed;
  int budget = 1;

  int t() const { return static_cast<int>(placed.size()); }
};

struct Action {
  std::array<double, kActionDims> raw{};       // pre-squash Gaussian sample
  std::array<double, kActionDims> squashed{};  // tanh(raw)
  std::array<double, kActionDims> noise{};     // standard-normal draw: raw = mean + std * noise
  CameraConfig decoded;
  double log_prob = 0.0;
};

/// Per-DoF Gaussian parameters of one state (log-std already clamped).
struct ActionDistribution {
  std::array<double, kActionDims> mean{};
  std::array<double, kActionDims> log_std{};
};

// ---------------------------------------------------------------------------
// Squashed Gaussian

inline std::array<double, kActionDims> log_half_widths(const ConfigSpace& cs) {
  std::array<double, kActionDims> out{};
  const auto ranges = cs.dof_ranges();
  for (std::size_t i = 0; i < kActionDims; ++i) out[i] = std::log(ranges[i].half_width());
  return out;
}

/// log(1 - tanh(u)^2), finite for every u.
inline double log_tanh_jacobian(double u) {
  const double a = -2.0 * u;
  const double softplus = a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a));
  return 2.0 * (std::numbers::ln2 - u - softplus);
}

/// Log-density of the decoded action: Gaussian over raw, tanh change of
/// variables, then the affine map onto each DoF range.
inline double squashed_log_prob(std::span<const double> mean, std::span<const double> log_std,
                                std::span<const double> raw, std::span<const double> log_half_width) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  double lp = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const double z = (raw[i] - mean[i]) * std::exp(-log_std[i]);
    lp += -0.5 * z * z - log_std[i] - half_log_2pi;
    lp -= log_tanh_jacobian(raw[i]);
    lp -= log_half_width[i];
  }
  return lp;
}

/// Maps squashed values in [-1, 1] onto the configuration space. mid ± half
/// can round one ulp past a bound, hence the clamp. Yaw is periodic, so the
/// one boundary value tanh can round to (+1 -> 2pi) wraps to 0.
inline CameraConfig decode_action(std::span<const double> squashed, const ConfigSpace& cs) {
  const auto r = cs.dof_ranges();
  auto dof = [&](std::size_t i) {
    return std::clamp(r[i].mid() + squashed[i] * r[i].half_width(), r[i].lo, r[i].hi);
  };
  CameraConfig c{dof(0), dof(1), dof(2), dof(3), dof(4), dof(5)};
  if (c.yaw >= kTwoPi) c.yaw -= kTwoPi;
  if (c.yaw < 0.0) c.yaw += kTwoPi;
  return c;
}

inline Action sample_action(const ActionDistribution& dist, const ConfigSpace& cs, CounterRng& rng) {
  Action a;
  for (std::size_t i = 0; i < kActionDims; ++i) {
    const double ls = std::clamp(dist.log_std[i], kLogStdMin, kLogStdMax);
    a.noise[i] = rng.normal();
    a.raw[i] = dist.mean[i] + std::exp(ls) * a.noise[i];
    a.squashed[i] = std::tanh(a.raw[i]);
  }
  a.decoded = decode_action(a.squashed, cs);
  std::array<double, kActionDims> ls{};
  for (std::size_t i = 0; i < kActionDims; ++i) ls[i] = std::clamp(dist.log_std[i], kLogStdMin, kLogStdMax);
  a.log_prob = squashed_log_prob(dist.mean, ls, a.raw, log_half_widths(cs));
  return a;
}

/// Deterministic action tanh(mean), used for greedy evaluation.
inline Action mean_action(const ActionDistribution& dist, const ConfigSpace& cs) {
  Action a;
  for (std::size_t i = 0; i < kActionDims; ++i) {
    a.raw[i] = dist.mean[i];
    a.squashed[i] = std::tanh(dist.mean[i]);
  }
  a.decoded = decode_action(a.squashed, cs);
  a.log_prob = squashed_log_prob(dist.mean, dist.log_std, a.raw, log_half_widths(cs));
  return a;
}

inline double gaussian_entropy(std::span<const double> log_std) {
  constexpr double per_dim = 1.41893853320467274178;  // 0.5 + 0.5 log(2 pi)
  double h = 0.0;
  for (double ls : log_std) h += per_dim + ls;
  return h;
}

/// Row-wise squashed log-probability as a tape op: mean and log_std are
/// [B x D] vars; raw (row-major [B x D]) is data. Forward values are exactly
/// squashed_log_prob of each row.
inline nn::Var squashed_log_prob(nn::Var mean, nn::Var log_std, std::vector<double> raw,
                                 std::span<const double> log_half_width) {
  nn::detail::same_tape("squashed_log_prob", mean, log_std);
  const std::size_t b = mean.rows(), d = mean.cols();
  if (log_std.rows() != b || log_std.cols() != d) nn::detail::mismatch("squashed_log_prob", mean, log_std);
  if (raw.size() != b * d || log_half_width.size() != d)
    throw Error(errc::kShapeMismatch, "squashed_log_prob: raw/half-width sizes do not match " + nn::shape_str(b, d));
  nn::Tape& t = *mean.tape();
  std::vector<double> out(b);
  auto mv = mean.value();
  auto sv = log_std.value();
  for (std::size_t r = 0; r < b; ++r)
    out[r] = squashed_log_prob(mv.subspan(r * d, d), sv.subspan(r * d, d),
                               std::span<const double>(raw).subspan(r * d, d), log_half_width);
  const std::size_t im = mean.id(), is = log_std.id(), io = t.size();
  return t.push_op(b, 1, std::move(out), {mean, log_std}, [=, raw = std::move(raw)](nn::Tape& tp) {
    auto g = tp.out_grad(io);
    auto m = tp.value(im);
    auto s = tp.value(is);
    double* gm = tp.grad_ptr(im);
    double* gs = tp.grad_ptr(is);
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        const std::size_t k = r * d + c;
        const double inv = std::exp(-s[k]);
        const double z = (raw[k] - m[k]) * inv;
        if (gm) gm[k] += g[r] * z * inv;
        if (gs) gs[k] += g[r] * (z * z - 1.0);
      }
  });
}

/// Row-wise entropy of the pre-squash Gaussian, [B x 1].
inline nn::Var gaussian_entropy(nn::Var log_std) {
  return nn::add_scalar(nn::sum_cols(log_std), 1.41893853320467274178 * static_cast<double>(log_std.cols()));
}

// ---------------------------------------------------------------------------
// Generator network

struct GeneratorConfig {
  int num_cameras = 4;
  std::size_t width = 128;
  std::size_t heads = 4;
  std::size_t hidden = 256;
  std::size_t layers = 3;
  std::size_t head_hidden = 128;
  double initial_log_std = -0.5;
  double value_output_gain = 1.0;
};

struct PolicyOutput {
  nn::Var mean;     // [B x 6]
  nn::Var log_std;  // [B x 6], clamped
  nn::Var value;    // [B x 1]
};

/// Permutation-invariant transformer encoder policy. The input sequence for
/// a state with t placed cameras is
///   [embed(c_1) .. embed(c_t), CFG_{t+1}, PAD x (N-1-t)]
/// with padding masked out as keys and no positional terms. Both heads read
/// only the encoder output at the CFG position.
class Generator {
 public:
  Generator() = default;

  Generator(const GeneratorConfig& cfg, const ConfigSpace& space, std::uint64_t seed) : cfg_(cfg), space_(space) {
    if (cfg.num_cameras < 1) throw Error(errc::kInvalidArgument, "generator needs at least one camera");
    const std::size_t d = cfg.width;
    embed_ = nn::Linear("embed", 7, d);
    cfg_tokens_ = nn::Parameter("cfg_tokens", static_cast<std::size_t>(cfg.num_cameras), d);
    pad_token_ = nn::Parameter("pad_token", 1, d);
    for (std::size_t l = 0; l < cfg.layers; ++l)
      layers_.emplace_back("encoder" + std::to_string(l), d, cfg.heads, cfg.hidden);
    final_norm_ = nn::LayerNorm("final_norm", d);
    policy1_ = nn::Linear("policy.fc1", d, cfg.head_hidden);
    policy2_ = nn::Linear("policy.fc2", cfg.head_hidden, 2 * kActionDims);
    value1_ = nn::Linear("value.fc1", d, cfg.head_hidden);
    value2_ = nn::Linear("value.fc2", cfg.head_hidden, 1);
    initialize(seed);
  }

  const GeneratorConfig& config() const { return cfg_; }
  const ConfigSpace& config_space() const { return space_; }
  int num_cameras() const { return cfg_.num_cameras; }

  std::vector<double> action_log_half_widths() const {
    const auto h = log_half_widths(space_);
    return {h.begin(), h.end()};
  }

  /// Parameters in declaration order (the checkpoint ordering).
  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out;
    embed_.collect(out);
    out.push_back(&cfg_tokens_);
    out.push_back(&pad_token_);
    for (auto& l : layers_) l.collect(out);
    final_norm_.collect(out);
    policy1_.collect(out);
    policy2_.collect(out);
    value1_.collect(out);
    value2_.collect(out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->size();
    return n;
  }

  /// Camera vector fed to the embedding: the 7-vector (x, y, z, cos, sin,
  /// pitch, fov) with location and angles affinely rescaled to [-1, 1] by the
  /// configuration space.
  std::array<double, 7> input_features(const CameraConfig& c) const {
    auto e = c.to_embedding();
    auto unit = [](double v, const Interval& r) { return (v - r.mid()) / r.half_width(); };
    e[0] = unit(e[0], space_.x);
    e[1] = unit(e[1], space_.y);
    e[2] = unit(e[2], space_.z);
    e[5] = unit(e[5], space_.pitch);
    e[6] = unit(e[6], space_.fov);
    return e;
  }

  struct Token {
    enum Kind { kCamera, kCfg, kPad } kind;
    int index;  // placed camera or CFG token index, 0-based; -1 for padding
  };

  /// Encoder input layout for a state: placed cameras in order, CFG_{t+1},
  /// then N-1-t padding tokens.
  std::vector<Token> token_sequence(const EpisodeState& s) const {
    if (s.t() >= cfg_.num_cameras)
      throw Error(errc::kInvalidArgument, "generator forward: state has t = " + std::to_string(s.t()) +
                                              " >= N = " + std::to_string(cfg_.num_cameras));
    std::vector<Token> seq;
    for (int j = 0; j < s.t(); ++j) seq.push_back({Token::kCamera, j});
    seq.push_back({Token::kCfg, s.t()});
    while (static_cast<int>(seq.size()) < cfg_.num_cameras) seq.push_back({Token::kPad, -1});
    return seq;
  }

  /// Batched forward pass; every state must satisfy t < N.
  PolicyOutput forward(nn::Tape& t, std::span<const EpisodeState> states) {
    const std::size_t n = static_cast<std::size_t>(cfg_.num_cameras);
    const std::size_t b = states.size();
    if (b == 0) throw Error(errc::kInvalidArgument, "generator forward on an empty batch");

    std::vector<double> feats;
    std::size_t placed_rows = 0;
    for (const auto& s : states) {
      if (s.t() >= cfg_.num_cameras)
        throw Error(errc::kInvalidArgument, "generator forward: state has t = " + std::to_string(s.t()) +
                                                " >= N = " + std::to_string(cfg_.num_cameras));
      for (const auto& c : s.placed) {
        const auto f = input_features(c);
        feats.insert(feats.end(), f.begin(), f.end());
        ++placed_rows;
      }
    }

    std::vector<nn::Var> table_parts;
    if (placed_rows > 0) table_parts.push_back(embed_(t, t.constant(placed_rows, 7, std::move(feats))));
    table_parts.push_back(t.parameter(cfg_tokens_));
    table_parts.push_back(t.parameter(pad_token_));
    nn::Var table = table_parts.size() == 1 ? table_parts.front() : nn::concat(table_parts, 0);

    std::vector<std::size_t> token_rows;
    std::vector<std::size_t> cfg_rows;
    std::vector<char> key_valid;
    token_rows.reserve(b * n);
    std::size_t next_placed = 0;
    for (std::size_t s = 0; s < b; ++s) {
      const auto seq = token_sequence(states[s]);
      for (std::size_t j = 0; j < n; ++j) {
        switch (seq[j].kind) {
          case Token::kCamera:
            token_rows.push_back(next_placed++);
            break;
          case Token::kCfg:
            token_rows.push_back(placed_rows + static_cast<std::size_t>(seq[j].index));
            cfg_rows.push_back(s * n + j);
            break;
          case Token::kPad:
            token_rows.push_back(placed_rows + n);
            break;
        }
        key_valid.push_back(seq[j].kind != Token::kPad);
      }
    }

    nn::Var x = nn::gather_rows(table, std::move(token_rows));
    for (auto& layer : layers_) x = layer(t, x, n, key_valid);
    x = final_norm_(t, x);
    nn::Var h = nn::gather_rows(x, std::move(cfg_rows));

    nn::Var pol = policy2_(t, nn::gelu(policy1_(t, h)));
    PolicyOutput out;
    out.mean = nn::slice(pol, 1, 0, kActionDims);
    out.log_std = nn::clamp(nn::slice(pol, 1, kActionDims, 2 * kActionDims), kLogStdMin, kLogStdMax);
    out.value = value2_(t, nn::gelu(value1_(t, h)));
    return out;
  }

  /// Inference for one state: distribution and value.
  std::pair<ActionDistribution, double> evaluate(const EpisodeState& state) {
    nn::Tape t(false);
    const PolicyOutput out = forward(t, std::span<const EpisodeState>(&state, 1));
    ActionDistribution dist;
    for (std::size_t i = 0; i < kActionDims; ++i) {
      dist.mean[i] = out.mean.value()[i];
      dist.log_std[i] = out.log_std.value()[i];
    }
    return {dist, out.value.item()};
  }

 private:
  void initialize(std::uint64_t seed) {
    CounterRng rng({seed, 0x67656e6572ULL});
    nn::init_orthogonal(embed_.weight, 1.0, rng);
    nn::init_truncated_normal(cfg_tokens_, 0.02, rng);
    nn::init_truncated_normal(pad_token_, 0.02, rng);
    for (auto& l : layers_) {
      nn::init_orthogonal(l.attn.query.weight, 1.0, rng);
      nn::init_orthogonal(l.attn.key.weight, 1.0, rng);
      nn::init_orthogonal(l.attn.value.weight, 1.0, rng);
      nn::init_orthogonal(l.attn.output.weight, 1.0, rng);
      nn::init_orthogonal(l.fc1.weight, std::sqrt(2.0), rng);
      nn::init_orthogonal(l.fc2.weight, 1.0, rng);
    }
    nn::init_orthogonal(policy1_.weight, std::sqrt(2.0), rng);
    // Zero final policy layer: initial mean 0, initial log-std from config.
    for (std::size_t i = kActionDims; i < 2 * kActionDims; ++i) policy2_.bias.value[i] = cfg_.initial_log_std;
    nn::init_orthogonal(value1_.weight, std::sqrt(2.0), rng);
    nn::init_orthogonal(value2_.weight, cfg_.value_output_gain, rng);
  }

  GeneratorConfig cfg_;
  ConfigSpace space_;
  nn::Linear embed_;
  nn::Parameter cfg_tokens_;
  nn::Parameter pad_token_;
  std::vector<nn::EncoderLayer> layers_;
  nn::LayerNorm final_norm_;
  nn::Linear policy1_, policy2_;
  nn::Linear value1_, value2_;
};

}  // namespace camsearch
