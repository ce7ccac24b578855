#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "camsearch/error.hpp"
#include "camsearch/generator.hpp"
#include "camsearch/nn/adam.hpp"
#include "camsearch/nn/tensor.hpp"
#include "camsearch/rng.hpp"

namespace camsearch {

struct PPOConfig {
  int buffer_size = 1024;
  int minibatch = 128;
  int epochs = 10;
  double clip = 0.2;
  double gamma = 1.0;
  double gae_lambda = 0.95;
  double learning_rate = 1e-4;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double diverse_weight = 0.1;
  double focus_weight = 0.1;
  double focus_delta = 0.01;
  long long max_steps = 50000;
  double max_grad_norm = 0.5;
  bool normalize_advantages = true;
  int reward_frames = 4;
  int eval_every_episodes = 50;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(errc::kValidation, "ppo config: " + what); };
    if (buffer_size < 1 || minibatch < 1) bad("buffer_size and minibatch must be positive");
    if (buffer_size % minibatch != 0) bad("buffer_size must be divisible by minibatch");
    if (epochs < 1) bad("epochs must be >= 1");
    if (clip < 0 || gamma < 0 || gae_lambda < 0 || learning_rate < 0 || entropy_coef < 0 || value_coef < 0 ||
        diverse_weight < 0 || focus_weight < 0 || max_grad_norm < 0)
      bad("coefficients must be >= 0");
    if (!(focus_delta > 0)) bad("focus_delta must be > 0");
    if (max_steps < 1) bad("max_steps must be >= 1");
    if (reward_frames < 1) bad("reward_frames must be >= 1");
    if (eval_every_episodes < 1) bad("eval_every_episodes must be >= 1");
  }
};

struct Transition {
  EpisodeState state;
  Action action;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool done = false;
  // Filled by ppo_update.
  double advantage = 0.0;
  double ret = 0.0;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Generalized advantage estimation over one finished episode; the value
/// after the terminal step is zero.
inline GaeResult gae(std::span<const double> rewards, std::span<const double> values, double gamma, double lambda) {
  if (rewards.size() != values.size())
    throw Error(errc::kShapeMismatch, "gae: rewards and values differ in length");
  GaeResult r;
  r.advantages.assign(rewards.size(), 0.0);
  r.returns.assign(rewards.size(), 0.0);
  double next_value = 0.0;
  double running = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    const double delta = rewards[i] + gamma * next_value - values[i];
    running = delta + gamma * lambda * running;
    r.advantages[i] = running;
    r.returns[i] = running + values[i];
    next_value = values[i];
  }
  return r;
}

inline GaeResult gae(std::span<const Transition> episode, double gamma, double lambda) {
  if (episode.empty() || !episode.back().done)
    throw Error(errc::kIncompleteEpisode, "gae: episode does not end with a terminal step");
  std::vector<double> rewards, values;
  for (const auto& t : episode) {
    rewards.push_back(t.reward);
    values.push_back(t.value);
  }
  return gae(rewards, values, gamma, lambda);
}

/// Unsigned PPO objective of one sample: min(r A, clip(r, 1-eps, 1+eps) A).
inline double clipped_surrogate(double ratio, double advantage, double eps) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * advantage);
}

struct RegularizerTerms {
  nn::Var diverse;  // 1x1 batch mean
  nn::Var focus;    // 1x1 batch mean
};

/// Builds the differentiable regularizers for a minibatch from the
/// reparameterized squashed actions ([B x D]).
using RegularizerFn =
    std::function<RegularizerTerms(nn::Tape&, std::span<const Transition* const>, nn::Var squashed)>;

struct UpdateStats {
  double loss_pi = 0.0;
  double loss_v = 0.0;
  double entropy = 0.0;
  double r_div = 0.0;
  double r_focus = 0.0;
  double ratio_mean = 0.0;
  double ratio_max = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
};

/// What ppo_update needs from a policy.
template <typename P>
concept PpoPolicy = requires(P p, nn::Tape& t, std::span<const EpisodeState> s) {
  { p.forward(t, s) } -> std::same_as<PolicyOutput>;
  { p.parameters() } -> std::same_as<std::vector<nn::Parameter*>>;
  { p.action_log_half_widths() } -> std::same_as<std::vector<double>>;
};

/// Clipped-surrogate PPO over a full buffer of finished episodes: GAE, then
/// `epochs` passes of shuffled minibatches with one Adam step each. The
/// buffer is cleared on return.
template <PpoPolicy Policy>
UpdateStats ppo_update(Policy& policy, std::vector<Transition>& buffer, const PPOConfig& cfg, nn::AdamState& adam,
                       CounterRng& rng, const RegularizerFn& regularizers = {}) {
  if (buffer.empty()) throw Error(errc::kInvalidArgument, "ppo_update: empty buffer");
  std::size_t begin = 0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    if (!buffer[i].done) continue;
    const GaeResult g =
        gae(std::span<const Transition>(buffer).subspan(begin, i + 1 - begin), cfg.gamma, cfg.gae_lambda);
    for (std::size_t k = begin; k <= i; ++k) {
      buffer[k].advantage = g.advantages[k - begin];
      buffer[k].ret = g.returns[k - begin];
    }
    begin = i + 1;
  }
  if (begin != buffer.size()) throw Error(errc::kIncompleteEpisode, "ppo_update: buffer ends mid-episode");

  std::vector<nn::Parameter*> params = policy.parameters();
  const std::vector<double> lhw = policy.action_log_half_widths();
  const std::size_t dims = lhw.size();
  adam.learning_rate = cfg.learning_rate;

  const std::size_t mb = std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatch), buffer.size());
  std::vector<std::size_t> order(buffer.size());
  UpdateStats stats;
  const bool use_reg = regularizers && (cfg.diverse_weight > 0.0 || cfg.focus_weight > 0.0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    for (std::size_t start = 0; start + mb <= order.size(); start += mb) {
      std::vector<const Transition*> batch;
      std::vector<EpisodeState> states;
      std::vector<double> raw, noise, old_logp, adv, ret;
      for (std::size_t k = start; k < start + mb; ++k) {
        const Transition& tr = buffer[order[k]];
        batch.push_back(&tr);
        states.push_back(tr.state);
        for (std::size_t d = 0; d < dims; ++d) {
          raw.push_back(tr.action.raw[d]);
          noise.push_back(tr.action.noise[d]);
        }
        old_logp.push_back(tr.log_prob);
        adv.push_back(tr.advantage);
        ret.push_back(tr.ret);
      }
      if (cfg.normalize_advantages && mb > 1) {
        double mean = 0.0, var = 0.0;
        for (double a : adv) mean += a;
        mean /= static_cast<double>(mb);
        for (double a : adv) var += (a - mean) * (a - mean);
        const double sd = std::sqrt(var / static_cast<double>(mb - 1));
        for (double& a : adv) a = (a - mean) / (sd + 1e-8);
      }

      nn::Tape t;
      const PolicyOutput out = policy.forward(t, states);
      nn::Var logp = squashed_log_prob(out.mean, out.log_std, raw, lhw);
      nn::Var ratio = nn::exp(nn::sub(logp, t.constant(mb, 1, old_logp)));
      nn::Var a = t.constant(mb, 1, adv);
      nn::Var surr = nn::minimum(nn::mul(ratio, a), nn::mul(nn::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), a));
      nn::Var loss_pi = nn::scale(nn::reduce_mean(surr), -1.0);
      nn::Var loss_v = nn::reduce_mean(nn::square(nn::sub(out.value, t.constant(mb, 1, ret))));
      nn::Var entropy = nn::reduce_mean(gaussian_entropy(out.log_std));
      nn::Var loss = nn::add(nn::add(loss_pi, nn::scale(loss_v, cfg.value_coef)), nn::scale(entropy, -cfg.entropy_coef));

      double r_div = 0.0, r_focus = 0.0;
      if (use_reg) {
        nn::Var squashed = nn::tanh(nn::add(out.mean, nn::mul(nn::exp(out.log_std), t.constant(mb, dims, noise))));
        const RegularizerTerms reg = regularizers(t, batch, squashed);
        loss = nn::add(loss, nn::add(nn::scale(reg.diverse, cfg.diverse_weight), nn::scale(reg.focus, cfg.focus_weight)));
        r_div = reg.diverse.item();
        r_focus = reg.focus.item();
      }
      if (!std::isfinite(loss.item()))
        throw Error(errc::kNonFinite, "ppo_update: non-finite loss (pi=" + std::to_string(loss_pi.item()) +
                                          ", v=" + std::to_string(loss_v.item()) +
                                          ", entropy=" + std::to_string(entropy.item()) + ", epoch " +
                                          std::to_string(epoch) + ")");

      nn::zero_grad(params);
      t.backward(loss);
      stats.grad_norm += nn::clip_grad_norm(params, cfg.max_grad_norm);
      nn::adam_step(params, adam);

      double rmean = 0.0, clipped = 0.0;
      for (double r : ratio.value()) {
        rmean += r;
        stats.ratio_max = std::max(stats.ratio_max, r);
        if (std::abs(r - 1.0) > cfg.clip) clipped += 1.0;
      }
      stats.ratio_mean += rmean / static_cast<double>(mb);
      stats.clip_fraction += clipped / static_cast<double>(mb);
      stats.loss_pi += loss_pi.item();
      stats.loss_v += loss_v.item();
      stats.entropy += entropy.item();
      stats.r_div += r_div;
      stats.r_focus += r_focus;
      ++stats.minibatches;
    }
  }

  for (const nn::Parameter* p : params)
    for (double v : p->value)
      if (!std::isfinite(v)) throw Error(errc::kNonFinite, "ppo_update: parameter " + p->name + " became non-finite");

  if (stats.minibatches > 0) {
    const double n = stats.minibatches;
    stats.loss_pi /= n;
    stats.loss_v /= n;
    stats.entropy /= n;
    stats.r_div /= n;
    stats.r_focus /= n;
    stats.ratio_mean /= n;
    stats.clip_fraction /= n;
    stats.grad_norm /= n;
  }
  buffer.clear();
  return stats;
}

}  // namespace camsearch
