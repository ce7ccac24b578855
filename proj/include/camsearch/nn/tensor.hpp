#pragma once

// Define-by-run reverse-mode differentiation over row-major 2-D tensors of
// doubles. Every op appends one node to a Tape; Tape::backward() walks the
// nodes in exact reverse recording order. Scalars are 1x1 tensors.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "camsearch/error.hpp"

namespace camsearch::nn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(std::size_t r, std::size_t c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

/// Trainable tensor living outside any tape. `grad` accumulates across
/// backward passes until zero_grad().
struct Parameter {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;

  Parameter() = default;
  Parameter(std::string n, std::size_t r, std::size_t c)
      : name(std::move(n)), rows(r), cols(c), value(r * c, 0.0), grad(r * c, 0.0) {}

  Shape shape() const { return {rows, cols}; }
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  std::size_t rows() const;
  std::size_t cols() const;
  Shape shape() const { return {rows(), cols()}; }
  std::size_t size() const { return rows() * cols(); }
  std::span<const double> value() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const { return value()[r * cols() + c]; }
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&)>;

  /// A tape constructed with record = false never stores backward rules
  /// (inference mode).
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
    check_size(rows, cols, values.size(), "constant");
    return push(rows, cols, std::move(values), false, {});
  }

  Var constant(std::size_t rows, std::size_t cols, double fill) {
    return push(rows, cols, std::vector<double>(rows * cols, fill), false, {});
  }

  /// Leaf whose gradient is kept on the tape (see grad()).
  Var variable(std::size_t rows, std::size_t cols, std::vector<double> values) {
    check_size(rows, cols, values.size(), "variable");
    return push(rows, cols, std::move(values), record_, {});
  }

  /// Leaf that reads p.value in place and accumulates into p.grad.
  Var parameter(Parameter& p) {
    Node n;
    n.rows = p.rows;
    n.cols = p.cols;
    n.external = p.value.data();
    n.requires_grad = record_;
    n.param_grad = record_ ? p.grad.data() : nullptr;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  void backward(Var loss) {
    if (loss.tape() != this || loss.size() != 1)
      throw Error(errc::kShapeMismatch, "backward expects a 1x1 loss on this tape, got " +
                                            shape_str(loss.rows(), loss.cols()));
    for (auto& n : nodes_) {
      if (n.requires_grad && !n.param_grad) n.grad.assign(n.rows * n.cols, 0.0);
    }
    if (!nodes_[loss.id()].requires_grad) return;
    grad_ptr(loss.id())[0] += 1.0;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].requires_grad && nodes_[i].backward) nodes_[i].backward(*this);
    }
  }

  std::span<const double> grad(Var v) const {
    const Node& n = nodes_.at(v.id());
    if (n.param_grad) return {n.param_grad, n.rows * n.cols};
    return n.grad;
  }

  // -- node access used by op implementations --------------------------------

  std::size_t rows(std::size_t id) const { return nodes_[id].rows; }
  std::size_t cols(std::size_t id) const { return nodes_[id].cols; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  std::span<const double> value(std::size_t id) const {
    const Node& n = nodes_[id];
    return {n.external ? n.external : n.storage.data(), n.rows * n.cols};
  }

  /// Null when the node does not take gradients.
  double* grad_ptr(std::size_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.param_grad) return n.param_grad;
    return n.grad.data();
  }

  std::span<const double> out_grad(std::size_t id) const { return nodes_[id].grad; }

  /// Appends an op result. `parents` decide whether the result needs a grad.
  Var push_op(std::size_t rows, std::size_t cols, std::vector<double> values, std::initializer_list<Var> parents,
              Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || requires_grad(p.id());
    return push(rows, cols, std::move(values), record_ && needs, needs ? std::move(backward) : Backward{});
  }

  Var push_op(std::size_t rows, std::size_t cols, std::vector<double> values, std::span<const Var> parents,
              Backward backward) {
    bool needs = false;
    for (const Var& p : parents) needs = needs || requires_grad(p.id());
    return push(rows, cols, std::move(values), record_ && needs, needs ? std::move(backward) : Backward{});
  }

 private:
  struct Node {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> storage;
    const double* external = nullptr;
    std::vector<double> grad;
    double* param_grad = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  static void check_size(std::size_t r, std::size_t c, std::size_t n, const char* what) {
    if (r * c != n)
      throw Error(errc::kShapeMismatch, std::string(what) + ": " + std::to_string(n) +
                                            " values for shape " + shape_str(r, c));
  }

  Var push(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad, Backward bw) {
    Node n;
    n.rows = rows;
    n.cols = cols;
    n.storage = std::move(values);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  bool record_;
  std::vector<Node> nodes_;
};

inline std::size_t Var::rows() const { return tape_->rows(id_); }
inline std::size_t Var::cols() const { return tape_->cols(id_); }
inline std::span<const double> Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }
inline double Var::item() const {
  if (size() != 1) throw Error(errc::kShapeMismatch, "item() on non-scalar " + shape_str(rows(), cols()));
  return value()[0];
}

// ---------------------------------------------------------------------------
// Primitive ops

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

[[noreturn]] inline void mismatch(const char* op, Var a, Var b) {
  throw Error(errc::kShapeMismatch, std::string(op) + ": incompatible shapes " + shape_str(a.rows(), a.cols()) +
                                        " and " + shape_str(b.rows(), b.cols()));
}

inline void same_tape(const char* op, Var a, Var b) {
  if (a.tape() != b.tape()) throw Error(errc::kInvalidArgument, std::string(op) + ": operands on different tapes");
}

}  // namespace detail

template <typename F, typename D>
Var map_unary(Var a, F f, D df) {
  Tape& t = *a.tape();
  auto x = a.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  const std::size_t io = t.size();
  return t.push_op(a.rows(), a.cols(), std::move(y), {a}, [ia, io, df](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    auto xv = tp.value(ia);
    auto yv = tp.value(io);
    auto g = tp.out_grad(io);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

inline Var matmul(Var a, Var b) {
  detail::same_tape("matmul", a, b);
  if (a.cols() != b.rows()) detail::mismatch("matmul", a, b);
  Tape& t = *a.tape();
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> y(m * n);
  detail::MMap(y.data(), m, n).noalias() = detail::CMap(a.value().data(), m, k) * detail::CMap(b.value().data(), k, n);
  const std::size_t ia = a.id(), ib = b.id(), io = t.size();
  return t.push_op(m, n, std::move(y), {a, b}, [ia, ib, io, m, k, n](Tape& tp) {
    const detail::CMap g(tp.out_grad(io).data(), m, n);
    if (double* ga = tp.grad_ptr(ia))
      detail::MMap(ga, m, k).noalias() += g * detail::CMap(tp.value(ib).data(), k, n).transpose();
    if (double* gb = tp.grad_ptr(ib))
      detail::MMap(gb, k, n).noalias() += detail::CMap(tp.value(ia).data(), m, k).transpose() * g;
  });
}

inline Var transpose(Var a) {
  Tape& t = *a.tape();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> y(m * n);
  auto x = a.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
  const std::size_t ia = a.id(), io = t.size();
  return t.push_op(n, m, std::move(y), {a}, [ia, io, m, n](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    auto g = tp.out_grad(io);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

namespace detail {

/// b matches a exactly, or b is a single row broadcast over a's rows, or b
/// is 1x1.
enum class Bcast { kSame, kRow, kScalar };

inline Bcast broadcast_kind(const char* op, Var a, Var b) {
  same_tape(op, a, b);
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::kSame;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  if (b.rows() == 1 && b.cols() == 1) return Bcast::kScalar;
  mismatch(op, a, b);
}

inline std::size_t bindex(Bcast k, std::size_t i, std::size_t cols) {
  switch (k) {
    case Bcast::kSame: return i;
    case Bcast::kRow: return i % cols;
    default: return 0;
  }
}

template <typename F, typename DA, typename DB>
Var binary(const char* op, Var a, Var b, F f, DA da, DB db) {
  const Bcast kind = broadcast_kind(op, a, b);
  Tape& t = *a.tape();
  const std::size_t cols = a.cols();
  auto x = a.value();
  auto z = b.value();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i], z[bindex(kind, i, cols)]);
  const std::size_t ia = a.id(), ib = b.id(), io = t.size();
  return t.push_op(a.rows(), cols, std::move(y), {a, b}, [=](Tape& tp) {
    auto g = tp.out_grad(io);
    auto xv = tp.value(ia);
    auto zv = tp.value(ib);
    double* ga = tp.grad_ptr(ia);
    double* gb = tp.grad_ptr(ib);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t j = bindex(kind, i, cols);
      if (ga) ga[i] += g[i] * da(xv[i], zv[j]);
      if (gb) gb[j] += g[i] * db(xv[i], zv[j]);
    }
  });
}

}  // namespace detail

/// a + b; b may be a row vector (bias) or a 1x1 scalar.
inline Var add(Var a, Var b) {
  return detail::binary(
      "add", a, b, [](double x, double z) { return x + z; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(Var a, Var b) {
  return detail::binary(
      "sub", a, b, [](double x, double z) { return x - z; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(Var a, Var b) {
  return detail::binary(
      "mul", a, b, [](double x, double z) { return x * z; }, [](double, double z) { return z; },
      [](double x, double) { return x; });
}

/// Elementwise minimum; ties send the gradient to `a`.
inline Var minimum(Var a, Var b) {
  return detail::binary(
      "minimum", a, b, [](double x, double z) { return std::min(x, z); },
      [](double x, double z) { return x <= z ? 1.0 : 0.0; }, [](double x, double z) { return x <= z ? 0.0 : 1.0; });
}

inline Var scale(Var a, double s) {
  return map_unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(Var a, double s) {
  return map_unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var relu(Var a) {
  return map_unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                   [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

/// Exact (erf) GeLU.
inline Var gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  return map_unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-0.5 * x * x); });
}

inline Var tanh(Var a) {
  return map_unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var exp(Var a) {
  return map_unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(Var a) {
  return map_unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var sin(Var a) {
  return map_unary(a, [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

inline Var cos(Var a) {
  return map_unary(a, [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

inline Var square(Var a) {
  return map_unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// log(1 + exp(x)) without overflow.
inline Var softplus(Var a) {
  return map_unary(
      a, [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

/// Hard clamp; the gradient is zero where the input is clamped.
inline Var clamp(Var a, double lo, double hi) {
  return map_unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                   [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

/// Softmax over the last axis. Entries equal to -inf get probability 0.
inline Var softmax(Var a) {
  Tape& t = *a.tape();
  const std::size_t m = a.rows(), n = a.cols();
  auto x = a.value();
  std::vector<double> y(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = y.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (yr[c] = std::exp(xr[c] - mx));
    for (std::size_t c = 0; c < n; ++c) yr[c] /= z;
  }
  const std::size_t ia = a.id(), io = t.size();
  return t.push_op(m, n, std::move(y), {a}, [ia, io, m, n](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    auto g = tp.out_grad(io);
    auto yv = tp.value(io);
    for (std::size_t r = 0; r < m; ++r) {
      double dotp = 0.0;
      for (std::size_t c = 0; c < n; ++c) dotp += g[r * n + c] * yv[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += yv[r * n + c] * (g[r * n + c] - dotp);
    }
  });
}

/// Layer normalization over the last axis with learned gain and bias
/// (both 1 x cols).
inline Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
  detail::same_tape("layer_norm", x, gain);
  detail::same_tape("layer_norm", x, bias);
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.rows() != 1 || gain.cols() != n) detail::mismatch("layer_norm", x, gain);
  if (bias.rows() != 1 || bias.cols() != n) detail::mismatch("layer_norm", x, bias);
  Tape& t = *x.tape();
  auto xv = x.value();
  auto gv = gain.value();
  auto bv = bias.value();
  std::vector<double> xhat(m * n), inv_std(m), y(m * n);
  for (std::size_t r = 0; r < m; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += xv[r * n + c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (xv[r * n + c] - mean) * (xv[r * n + c] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (xv[r * n + c] - mean) * inv_std[r];
      y[r * n + c] = gv[c] * xhat[r * n + c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id(), io = t.size();
  return t.push_op(m, n, std::move(y), {x, gain, bias},
                   [ix, ig, ib, io, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp) {
                     auto g = tp.out_grad(io);
                     auto gv2 = tp.value(ig);
                     double* gx = tp.grad_ptr(ix);
                     double* gg = tp.grad_ptr(ig);
                     double* gb = tp.grad_ptr(ib);
                     for (std::size_t r = 0; r < m; ++r) {
                       double mean_d = 0.0, mean_dx = 0.0;
                       for (std::size_t c = 0; c < n; ++c) {
                         const double d = g[r * n + c] * gv2[c];
                         mean_d += d;
                         mean_dx += d * xhat[r * n + c];
                         if (gg) gg[c] += g[r * n + c] * xhat[r * n + c];
                         if (gb) gb[c] += g[r * n + c];
                       }
                       if (!gx) continue;
                       mean_d /= static_cast<double>(n);
                       mean_dx /= static_cast<double>(n);
                       for (std::size_t c = 0; c < n; ++c) {
                         const double d = g[r * n + c] * gv2[c];
                         gx[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dx);
                       }
                     }
                   });
}

/// Concatenation along axis 0 (rows) or 1 (columns).
inline Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw Error(errc::kShapeMismatch, "concat: no inputs");
  Tape& t = *parts.front().tape();
  std::vector<std::size_t> ids, prow, pcol;
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    detail::same_tape("concat", parts.front(), p);
    if (axis == 0) {
      if (p.cols() != parts.front().cols()) detail::mismatch("concat", parts.front(), p);
      rows += p.rows();
      cols = p.cols();
    } else {
      if (p.rows() != parts.front().rows()) detail::mismatch("concat", parts.front(), p);
      cols += p.cols();
      rows = p.rows();
    }
    ids.push_back(p.id());
    prow.push_back(p.rows());
    pcol.push_back(p.cols());
  }
  std::vector<double> y(rows * cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    auto v = p.value();
    for (std::size_t r = 0; r < p.rows(); ++r)
      for (std::size_t c = 0; c < p.cols(); ++c) {
        if (axis == 0)
          y[(off + r) * cols + c] = v[r * p.cols() + c];
        else
          y[r * cols + off + c] = v[r * p.cols() + c];
      }
    off += axis == 0 ? p.rows() : p.cols();
  }
  const std::size_t io = t.size();
  return t.push_op(rows, cols, std::move(y), parts, [=](Tape& tp) {
    auto g = tp.out_grad(io);
    std::size_t o = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (double* gp = tp.grad_ptr(ids[k])) {
        for (std::size_t r = 0; r < prow[k]; ++r)
          for (std::size_t c = 0; c < pcol[k]; ++c)
            gp[r * pcol[k] + c] += axis == 0 ? g[(o + r) * cols + c] : g[r * cols + o + c];
      }
      o += axis == 0 ? prow[k] : pcol[k];
    }
  });
}

inline Var concat(std::initializer_list<Var> parts, int axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}

/// Half-open slice [begin, end) along axis 0 or 1.
inline Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  const std::size_t lim = axis == 0 ? a.rows() : a.cols();
  if (begin >= end || end > lim)
    throw Error(errc::kShapeMismatch, "slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                                          ") invalid for " + shape_str(a.rows(), a.cols()));
  Tape& t = *a.tape();
  const std::size_t m = a.rows(), n = a.cols();
  const std::size_t rows = axis == 0 ? end - begin : m;
  const std::size_t cols = axis == 0 ? n : end - begin;
  std::vector<double> y(rows * cols);
  auto x = a.value();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      y[r * cols + c] = axis == 0 ? x[(begin + r) * n + c] : x[r * n + begin + c];
  const std::size_t ia = a.id(), io = t.size();
  return t.push_op(rows, cols, std::move(y), {a}, [=](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    auto g = tp.out_grad(io);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        (axis == 0 ? ga[(begin + r) * n + c] : ga[r * n + begin + c]) += g[r * cols + c];
  });
}

/// Row gather: out[i] = a[indices[i]]. Backward scatter-adds.
inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tape& t = *a.tape();
  const std::size_t n = a.cols();
  std::vector<double> y(indices.size() * n);
  auto x = a.value();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.rows())
      throw Error(errc::kShapeMismatch, "gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                                            shape_str(a.rows(), n));
    std::copy_n(x.data() + indices[i] * n, n, y.data() + i * n);
  }
  const std::size_t ia = a.id(), io = t.size(), rows = indices.size();
  return t.push_op(rows, n, std::move(y), {a}, [ia, io, n, idx = std::move(indices)](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    auto g = tp.out_grad(io);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) ga[idx[i] * n + c] += g[i * n + c];
  });
}

inline Var reduce_sum(Var a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double v : a.value()) s += v;
  const std::size_t ia = a.id(), io = t.size(), size = a.size();
  return t.push_op(1, 1, {s}, {a}, [ia, io, size](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    const double g = tp.out_grad(io)[0];
    for (std::size_t i = 0; i < size; ++i) ga[i] += g;
  });
}

inline Var reduce_mean(Var a) { return scale(reduce_sum(a), 1.0 / static_cast<double>(a.size())); }

/// Per-row sum: [m x n] -> [m x 1].
inline Var sum_cols(Var a) {
  Tape& t = *a.tape();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> y(m, 0.0);
  auto x = a.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y[r] += x[r * n + c];
  const std::size_t ia = a.id(), io = t.size();
  return t.push_op(m, 1, std::move(y), {a}, [ia, io, m, n](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    auto g = tp.out_grad(io);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r];
  });
}

/// Euclidean norm of each row: [m x n] -> [m x 1]. A zero row takes the zero
/// subgradient.
inline Var row_norm(Var a) {
  Tape& t = *a.tape();
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> y(m, 0.0);
  auto x = a.value();
  for (std::size_t r = 0; r < m; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += x[r * n + c] * x[r * n + c];
    y[r] = std::sqrt(s);
  }
  const std::size_t ia = a.id(), io = t.size();
  return t.push_op(m, 1, std::move(y), {a}, [ia, io, m, n](Tape& tp) {
    double* ga = tp.grad_ptr(ia);
    if (!ga) return;
    auto g = tp.out_grad(io);
    auto xv = tp.value(ia);
    auto yv = tp.value(io);
    for (std::size_t r = 0; r < m; ++r) {
      if (yv[r] == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r] * xv[r * n + c] / yv[r];
    }
  });
}

}  // namespace camsearch::nn
