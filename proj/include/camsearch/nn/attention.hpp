#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "camsearch/nn/tensor.hpp"

namespace camsearch::nn {

/// Attention probabilities and output for rows arranged as consecutive
/// sequences of `group` tokens. key_valid[r] == 0 removes row r as a key
/// (its logit is -inf for every query of its sequence).
struct AttentionForward {
  std::vector<double> out;    // [rows x d]
  std::vector<double> probs;  // [sequence][head][query][key], group^2 per (sequence, head)
};

inline AttentionForward attention_forward(std::span<const double> q, std::span<const double> k,
                                          std::span<const double> v, std::size_t rows, std::size_t d,
                                          std::size_t group, std::size_t heads, const std::vector<char>& key_valid) {
  const std::size_t dh = d / heads;
  const std::size_t seqs = rows / group;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  AttentionForward f;
  f.out.assign(rows * d, 0.0);
  f.probs.assign(seqs * heads * group * group, 0.0);
  std::vector<double> logits(group);
  for (std::size_t s = 0; s < seqs; ++s) {
    const std::size_t r0 = s * group;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      for (std::size_t i = 0; i < group; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < group; ++j) {
          if (!key_valid[r0 + j]) {
            logits[j] = -std::numeric_limits<double>::infinity();
            continue;
          }
          double acc = 0.0;
          for (std::size_t c = 0; c < dh; ++c) acc += q[(r0 + i) * d + c0 + c] * k[(r0 + j) * d + c0 + c];
          logits[j] = acc * inv;
          mx = std::max(mx, logits[j]);
        }
        double* p = f.probs.data() + ((s * heads + h) * group + i) * group;
        double z = 0.0;
        for (std::size_t j = 0; j < group; ++j) z += (p[j] = key_valid[r0 + j] ? std::exp(logits[j] - mx) : 0.0);
        for (std::size_t j = 0; j < group; ++j) p[j] /= z;
        double* o = f.out.data() + (r0 + i) * d + c0;
        for (std::size_t j = 0; j < group; ++j) {
          if (p[j] == 0.0) continue;
          const double* vr = v.data() + (r0 + j) * d + c0;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * vr[c];
        }
      }
    }
  }
  return f;
}

/// Multi-head scaled dot-product attention as one tape op. q, k, v are
/// [rows x d] with rows a multiple of `group`; sequences never attend
/// across each other.
inline Var attention(Var q, Var k, Var v, std::size_t group, std::size_t heads, std::vector<char> key_valid) {
  detail::same_tape("attention", q, k);
  detail::same_tape("attention", q, v);
  const std::size_t rows = q.rows(), d = q.cols();
  if (k.rows() != rows || k.cols() != d) detail::mismatch("attention", q, k);
  if (v.rows() != rows || v.cols() != d) detail::mismatch("attention", q, v);
  if (heads == 0 || d % heads != 0)
    throw Error(errc::kShapeMismatch, "attention: width " + std::to_string(d) + " not divisible by " +
                                          std::to_string(heads) + " heads");
  if (group == 0 || rows % group != 0)
    throw Error(errc::kShapeMismatch, "attention: " + std::to_string(rows) + " rows not a multiple of group " +
                                          std::to_string(group));
  if (key_valid.size() != rows)
    throw Error(errc::kShapeMismatch, "attention: mask length " + std::to_string(key_valid.size()) + " != rows " +
                                          std::to_string(rows));
  for (std::size_t s = 0; s < rows / group; ++s) {
    bool any = false;
    for (std::size_t j = 0; j < group; ++j) any = any || key_valid[s * group + j];
    if (!any) throw Error(errc::kInvalidArgument, "attention: sequence with every key masked");
  }

  Tape& t = *q.tape();
  AttentionForward f = attention_forward(q.value(), k.value(), v.value(), rows, d, group, heads, key_valid);
  const std::size_t iq = q.id(), ik = k.id(), iv = v.id(), io = t.size();
  return t.push_op(rows, d, std::move(f.out), {q, k, v},
                   [=, probs = std::move(f.probs)](Tape& tp) {
                     const std::size_t dh = d / heads;
                     const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
                     auto g = tp.out_grad(io);
                     auto qv = tp.value(iq);
                     auto kv = tp.value(ik);
                     auto vv = tp.value(iv);
                     double* gq = tp.grad_ptr(iq);
                     double* gk = tp.grad_ptr(ik);
                     double* gv = tp.grad_ptr(iv);
                     std::vector<double> dp(group), ds(group);
                     for (std::size_t s = 0; s < rows / group; ++s) {
                       const std::size_t r0 = s * group;
                       for (std::size_t h = 0; h < heads; ++h) {
                         const std::size_t c0 = h * dh;
                         for (std::size_t i = 0; i < group; ++i) {
                           const double* p = probs.data() + ((s * heads + h) * group + i) * group;
                           const double* go = g.data() + (r0 + i) * d + c0;
                           double sum = 0.0;
                           for (std::size_t j = 0; j < group; ++j) {
                             double acc = 0.0;
                             const double* vr = vv.data() + (r0 + j) * d + c0;
                             for (std::size_t c = 0; c < dh; ++c) acc += go[c] * vr[c];
                             dp[j] = acc;
                             sum += p[j] * acc;
                             if (gv && p[j] != 0.0) {
                               double* gvr = gv + (r0 + j) * d + c0;
                               for (std::size_t c = 0; c < dh; ++c) gvr[c] += p[j] * go[c];
                             }
                           }
                           for (std::size_t j = 0; j < group; ++j) ds[j] = p[j] * (dp[j] - sum) * inv;
                           for (std::size_t j = 0; j < group; ++j) {
                             if (ds[j] == 0.0) continue;
                             if (gq) {
                               const double* kr = kv.data() + (r0 + j) * d + c0;
                               double* gqr = gq + (r0 + i) * d + c0;
                               for (std::size_t c = 0; c < dh; ++c) gqr[c] += ds[j] * kr[c];
                             }
                             if (gk) {
                               const double* qr = qv.data() + (r0 + i) * d + c0;
                               double* gkr = gk + (r0 + j) * d + c0;
                               for (std::size_t c = 0; c < dh; ++c) gkr[c] += ds[j] * qr[c];
                             }
                           }
                         }
                       }
                     }
                   });
}

}  // namespace camsearch::nn
