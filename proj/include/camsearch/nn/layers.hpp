#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "camsearch/nn/attention.hpp"
#include "camsearch/nn/tensor.hpp"
#include "camsearch/rng.hpp"

namespace camsearch::nn {

// -- initializers ------------------------------------------------------------

/// Normal(0, std) truncated at two standard deviations.
inline void init_truncated_normal(Parameter& p, double std, CounterRng& rng) {
  for (double& v : p.value) {
    double z = rng.normal();
    while (std::abs(z) > 2.0) z = rng.normal();
    v = std * z;
  }
}

/// Orthogonal init of a rows x cols matrix (semi-orthogonal when
/// non-square), scaled by `gain`.
inline void init_orthogonal(Parameter& p, double gain, CounterRng& rng) {
  const auto r = static_cast<Eigen::Index>(p.rows);
  const auto c = static_cast<Eigen::Index>(p.cols);
  const bool tall = r >= c;
  const Eigen::Index big = tall ? r : c, small = tall ? c : r;
  Eigen::MatrixXd a(big, small);
  for (Eigen::Index i = 0; i < big; ++i)
    for (Eigen::Index j = 0; j < small; ++j) a(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd rr = qr.matrixQR().topLeftCorner(small, small);
  for (Eigen::Index j = 0; j < small; ++j)
    if (rr(j, j) < 0.0) q.col(j) *= -1.0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      p.value[static_cast<std::size_t>(i * c + j)] = gain * (tall ? q(i, j) : q(j, i));
}

// -- modules -------------------------------------------------------------------

struct Linear {
  Parameter weight;  // [in x out]
  Parameter bias;    // [1 x out]

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", in, out), bias(name + ".bias", 1, out) {}

  Var operator()(Tape& t, Var x) { return add(matmul(x, t.parameter(weight)), t.parameter(bias)); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&weight);
    out.push_back(&bias);
  }
};

struct LayerNorm {
  Parameter gain;
  Parameter bias;

  LayerNorm() = default;
  LayerNorm(const std::string& name, std::size_t d) : gain(name + ".gain", 1, d), bias(name + ".bias", 1, d) {
    std::fill(gain.value.begin(), gain.value.end(), 1.0);
  }

  Var operator()(Tape& t, Var x) { return layer_norm(x, t.parameter(gain), t.parameter(bias)); }

  void collect(std::vector<Parameter*>& out) {
    out.push_back(&gain);
    out.push_back(&bias);
  }
};

/// Self-attention over consecutive groups of rows; no positional terms.
struct MultiHeadSelfAttention {
  std::size_t heads = 4;
  Linear query, key, value, output;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(const std::string& name, std::size_t d, std::size_t h)
      : heads(h), query(name + ".q", d, d), key(name + ".k", d, d), value(name + ".v", d, d), output(name + ".o", d, d) {}

  Var operator()(Tape& t, Var x, std::size_t group, const std::vector<char>& key_valid) {
    Var a = attention(query(t, x), key(t, x), value(t, x), group, heads, key_valid);
    return output(t, a);
  }

  void collect(std::vector<Parameter*>& out) {
    query.collect(out);
    key.collect(out);
    value.collect(out);
    output.collect(out);
  }
};

/// Pre-layer-norm transformer encoder block with a GeLU MLP.
struct EncoderLayer {
  LayerNorm norm1;
  MultiHeadSelfAttention attn;
  LayerNorm norm2;
  Linear fc1;
  Linear fc2;

  EncoderLayer() = default;
  EncoderLayer(const std::string& name, std::size_t d, std::size_t heads, std::size_t hidden)
      : norm1(name + ".norm1", d),
        attn(name + ".attn", d, heads),
        norm2(name + ".norm2", d),
        fc1(name + ".fc1", d, hidden),
        fc2(name + ".fc2", hidden, d) {}

  Var operator()(Tape& t, Var x, std::size_t group, const std::vector<char>& key_valid) {
    Var h = add(x, attn(t, norm1(t, x), group, key_valid));
    return add(h, fc2(t, gelu(fc1(t, norm2(t, h)))));
  }

  void collect(std::vector<Parameter*>& out) {
    norm1.collect(out);
    attn.collect(out);
    norm2.collect(out);
    fc1.collect(out);
    fc2.collect(out);
  }
};

}  // namespace camsearch::nn
