#pragma once

// Dense f64 tensors with reverse-mode automatic differentiation.
//
// Every operation appends a node to an implicit graph; backward() walks the
// graph once in reverse topological order and accumulates gradients into the
// leaves. Values are immutable after creation except for gradient buffers and
// explicit in-place updates of leaf parameters (optimizer steps).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "simtrack/common.hpp"

namespace simtrack {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized lazily during backward
  bool requires_grad = false;
  bool trainable = false;
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backprop;  // pushes this->grad into parents' grads
};

// Counts node creations; used by tests to assert per-frame cost contracts.
inline std::atomic<uint64_t>& op_counter() {
  static std::atomic<uint64_t> c{0};
  return c;
}

// While disabled, ops record no graph structure (inference mode).
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
};

namespace detail {

inline std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value) {
  if (static_cast<int64_t>(value.size()) != shape_numel(shape)) {
    throw std::runtime_error("tensor: data size " + std::to_string(value.size()) +
                             " does not match shape " + shape_str(shape));
  }
  for (int d : shape) {
    if (d <= 0) throw std::runtime_error("tensor: non-positive extent in " + shape_str(shape));
  }
  op_counter().fetch_add(1, std::memory_order_relaxed);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return n;
}

inline void ensure_grad(Node* n) {
  if (n->grad.empty()) n->grad.assign(n->value.size(), 0.0);
}

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  bool defined() const { return static_cast<bool>(n_); }

  static Tensor from(Shape shape, std::vector<double> data) {
    return Tensor(detail::make_node(std::move(shape), std::move(data)));
  }

  static Tensor zeros(Shape shape) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
  }

  static Tensor full(Shape shape, double v) {
    auto n = shape_numel(shape);
    return from(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
  }

  static Tensor scalar(double v) { return from(Shape{}, {v}); }

  // Trainable leaf. Gradients accumulate here during backward().
  static Tensor param(Shape shape, std::vector<double> data, std::string name) {
    Tensor t = from(std::move(shape), std::move(data));
    t.n_->trainable = true;
    t.n_->requires_grad = true;
    t.n_->name = std::move(name);
    return t;
  }

  const Shape& shape() const { return node_ref().shape; }
  int rank() const { return static_cast<int>(shape().size()); }
  int64_t size() const { return static_cast<int64_t>(node_ref().value.size()); }
  const std::vector<double>& values() const { return node_ref().value; }

  double item() const {
    if (size() != 1) throw std::runtime_error("item: tensor is not scalar, shape " + shape_str(shape()));
    return node_ref().value[0];
  }

  // In-place update of a leaf (optimizer steps, finite-difference probes).
  std::vector<double>& leaf_values() {
    Node& n = node_ref();
    if (n.backprop) throw std::runtime_error("leaf_values: not a leaf tensor");
    return n.value;
  }

  bool requires_grad() const { return node_ref().requires_grad; }
  bool trainable() const { return node_ref().trainable; }
  const std::string& name() const { return node_ref().name; }

  bool has_grad() const { return !node_ref().grad.empty(); }
  const std::vector<double>& grad() const {
    const Node& n = node_ref();
    if (n.grad.empty()) throw std::runtime_error("grad: no gradient on tensor " + n.name);
    return n.grad;
  }
  void zero_grad() { node_ref().grad.clear(); }

  std::shared_ptr<Node> node() const { return n_; }

  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

 private:
  Node& node_ref() const {
    if (!n_) throw std::runtime_error("use of undefined tensor");
    return *n_;
  }

  std::shared_ptr<Node> n_;
};

namespace detail {

// Builds the result node and wires the backward closure when any input
// requires a gradient and grad mode is on.
inline Tensor op_result(Shape shape, std::vector<double> value,
                        std::vector<Tensor> inputs,
                        std::function<void(Node&)> backprop) {
  auto n = make_node(std::move(shape), std::move(value));
  bool need = false;
  if (GradMode::enabled()) {
    for (const auto& t : inputs) {
      if (t.defined() && t.requires_grad()) need = true;
    }
  }
  if (need) {
    n->requires_grad = true;
    for (auto& t : inputs) {
      if (t.defined()) n->parents.push_back(t.node());
    }
    Node* raw = n.get();
    n->backprop = [raw, fn = std::move(backprop)]() { fn(*raw); };
  }
  return Tensor(n);
}

// True when b is a trailing suffix of a (scalar b included).
inline bool suffix_of(const Shape& b, const Shape& a) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic (with leading-dim broadcast of the second operand)

namespace detail {

enum class EwKind { Add, Sub, Mul, Div };

inline Tensor ewise(const Tensor& a, const Tensor& b, EwKind kind, const char* opname) {
  if (!suffix_of(b.shape(), a.shape())) {
    throw std::runtime_error(std::string(opname) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()) +
                             " (second operand must be a trailing suffix)");
  }
  const auto& av = a.values();
  const auto& bv = b.values();
  const size_t bs = bv.size();
  std::vector<double> out(av.size());
  switch (kind) {
    case EwKind::Add:
      for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i % bs];
      break;
    case EwKind::Sub:
      for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i % bs];
      break;
    case EwKind::Mul:
      for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i % bs];
      break;
    case EwKind::Div:
      for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i % bs];
      break;
  }
  auto an = a.node();
  auto bn = b.node();
  return op_result(a.shape(), std::move(out), {a, b}, [an, bn, bs, kind](Node& self) {
    const auto& g = self.grad;
    if (an->requires_grad) {
      ensure_grad(an.get());
      auto& da = an->grad;
      switch (kind) {
        case EwKind::Add:
        case EwKind::Sub:
          for (size_t i = 0; i < g.size(); ++i) da[i] += g[i];
          break;
        case EwKind::Mul:
          for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bn->value[i % bs];
          break;
        case EwKind::Div:
          for (size_t i = 0; i < g.size(); ++i) da[i] += g[i] / bn->value[i % bs];
          break;
      }
    }
    if (bn->requires_grad) {
      ensure_grad(bn.get());
      auto& db = bn->grad;
      switch (kind) {
        case EwKind::Add:
          for (size_t i = 0; i < g.size(); ++i) db[i % bs] += g[i];
          break;
        case EwKind::Sub:
          for (size_t i = 0; i < g.size(); ++i) db[i % bs] -= g[i];
          break;
        case EwKind::Mul:
          for (size_t i = 0; i < g.size(); ++i) db[i % bs] += g[i] * an->value[i];
          break;
        case EwKind::Div: {
          for (size_t i = 0; i < g.size(); ++i) {
            double bvv = bn->value[i % bs];
            db[i % bs] -= g[i] * an->value[i] / (bvv * bvv);
          }
          break;
        }
      }
    }
  });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::ewise(a, b, detail::EwKind::Add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::ewise(a, b, detail::EwKind::Sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::ewise(a, b, detail::EwKind::Mul, "mul"); }
inline Tensor div(const Tensor& a, const Tensor& b) { return detail::ewise(a, b, detail::EwKind::Div, "div"); }

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  auto an = a.node();
  return detail::op_result(a.shape(), std::move(out), {a}, [an, s](Node& self) {
    if (!an->requires_grad) return;
    detail::ensure_grad(an.get());
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
  });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

// ---------------------------------------------------------------------------
// Unary maps

namespace detail {

inline Tensor unary(const Tensor& a, const std::function<double(double)>& f,
                    const std::function<double(double, double)>& dfdx_times_g) {
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(a.values()[i]);
  auto an = a.node();
  return op_result(a.shape(), std::move(out), {a}, [an, dfdx_times_g](Node& self) {
    if (!an->requires_grad) return;
    ensure_grad(an.get());
    for (size_t i = 0; i < self.grad.size(); ++i) {
      an->grad[i] += dfdx_times_g(an->value[i], self.grad[i]);
    }
  });
}

}  // namespace detail

inline Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475244008444;
  constexpr double inv_sqrt_2pi = 0.3989422804014326779399461;
  return detail::unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [](double x, double g) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
        return g * (cdf + x * pdf);
      });
}

inline Tensor relu(const Tensor& a) {
  return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                       [](double x, double g) { return x > 0.0 ? g : 0.0; });
}

inline Tensor vabs(const Tensor& a) {
  return detail::unary(a, [](double x) { return std::fabs(x); },
                       [](double x, double g) { return x > 0.0 ? g : (x < 0.0 ? -g : 0.0); });
}

// Elementwise extrema; ties route the gradient to the first operand.
inline Tensor vmax(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::runtime_error("vmax: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(a.values()[i], b.values()[i]);
  auto an = a.node();
  auto bn = b.node();
  return detail::op_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      bool a_wins = an->value[i] >= bn->value[i];
      Node* dst = a_wins ? an.get() : bn.get();
      if (!dst->requires_grad) continue;
      detail::ensure_grad(dst);
      dst->grad[i] += self.grad[i];
    }
  });
}

inline Tensor vmin(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::runtime_error("vmin: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  std::vector<double> out(a.values().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(a.values()[i], b.values()[i]);
  auto an = a.node();
  auto bn = b.node();
  return detail::op_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      bool a_wins = an->value[i] <= bn->value[i];
      Node* dst = a_wins ? an.get() : bn.get();
      if (!dst->requires_grad) continue;
      detail::ensure_grad(dst);
      dst->grad[i] += self.grad[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  auto an = a.node();
  return detail::op_result(Shape{}, {s}, {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    detail::ensure_grad(an.get());
    double g = self.grad[0];
    for (auto& d : an->grad) d += g;
  });
}

inline Tensor mean(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  double n = static_cast<double>(a.size());
  auto an = a.node();
  return detail::op_result(Shape{}, {s / n}, {a}, [an, n](Node& self) {
    if (!an->requires_grad) return;
    detail::ensure_grad(an.get());
    double g = self.grad[0] / n;
    for (auto& d : an->grad) d += g;
  });
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.size()) {
    throw std::runtime_error("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  auto an = a.node();
  return detail::op_result(std::move(shape), a.values(), {a}, [an](Node& self) {
    if (!an->requires_grad) return;
    detail::ensure_grad(an.get());
    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
  });
}

namespace detail {

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) {
    st[i] = st[i + 1] * s[i + 1];
  }
  return st;
}

}  // namespace detail

inline Tensor permute(const Tensor& a, const std::vector<int>& perm) {
  const Shape& in = a.shape();
  if (perm.size() != in.size()) throw std::runtime_error("permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  Shape out_shape(perm.size());
  for (size_t d = 0; d < perm.size(); ++d) {
    int p = perm[d];
    if (p < 0 || p >= static_cast<int>(in.size()) || seen[p]) {
      throw std::runtime_error("permute: invalid permutation");
    }
    seen[p] = true;
    out_shape[d] = in[p];
  }
  auto in_strides = detail::row_major_strides(in);
  // src offset for each output linear index
  std::vector<int64_t> src(static_cast<size_t>(a.size()));
  {
    std::vector<int64_t> idx(perm.size(), 0);
    for (int64_t o = 0; o < a.size(); ++o) {
      int64_t off = 0;
      for (size_t d = 0; d < perm.size(); ++d) off += idx[d] * in_strides[perm[d]];
      src[static_cast<size_t>(o)] = off;
      for (int d = static_cast<int>(perm.size()) - 1; d >= 0; --d) {
        if (++idx[d] < out_shape[d]) break;
        idx[d] = 0;
      }
    }
  }
  std::vector<double> out(static_cast<size_t>(a.size()));
  for (size_t o = 0; o < out.size(); ++o) out[o] = a.values()[static_cast<size_t>(src[o])];
  auto an = a.node();
  auto src_shared = std::make_shared<std::vector<int64_t>>(std::move(src));
  return detail::op_result(std::move(out_shape), std::move(out), {a}, [an, src_shared](Node& self) {
    if (!an->requires_grad) return;
    detail::ensure_grad(an.get());
    for (size_t o = 0; o < self.grad.size(); ++o) {
      an->grad[static_cast<size_t>((*src_shared)[o])] += self.grad[o];
    }
  });
}

// Swap the last two axes.
inline Tensor transpose(const Tensor& a) {
  int r = a.rank();
  if (r < 2) throw std::runtime_error("transpose: rank must be >= 2");
  std::vector<int> perm(static_cast<size_t>(r));
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[static_cast<size_t>(r - 2)], perm[static_cast<size_t>(r - 1)]);
  return permute(a, perm);
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw std::runtime_error("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  int r = static_cast<int>(s0.size());
  if (axis < 0 || axis >= r) throw std::runtime_error("concat: axis out of range");
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (static_cast<int>(s.size()) != r) throw std::runtime_error("concat: rank mismatch");
    for (int d = 0; d < r; ++d) {
      if (d != axis && s[static_cast<size_t>(d)] != s0[static_cast<size_t>(d)]) {
        throw std::runtime_error("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
      }
    }
    out_shape[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
  }
  int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[static_cast<size_t>(d)];
  int64_t inner = 1;
  for (int d = axis + 1; d < r; ++d) inner *= s0[static_cast<size_t>(d)];

  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  int64_t out_row = shape_numel(out_shape) / std::max<int64_t>(outer, 1) ;
  std::vector<int64_t> part_rows(parts.size());
  for (size_t p = 0; p < parts.size(); ++p) {
    part_rows[p] = parts[p].shape()[static_cast<size_t>(axis)] * inner;
  }
  for (int64_t o = 0; o < outer; ++o) {
    int64_t off = o * out_row;
    for (size_t p = 0; p < parts.size(); ++p) {
      const auto& v = parts[p].values();
      std::copy_n(v.begin() + o * part_rows[p], part_rows[p], out.begin() + off);
      off += part_rows[p];
    }
  }
  std::vector<std::shared_ptr<Node>> pn;
  pn.reserve(parts.size());
  for (const auto& p : parts) pn.push_back(p.node());
  auto rows = std::make_shared<std::vector<int64_t>>(std::move(part_rows));
  return detail::op_result(
      std::move(out_shape), std::move(out), parts,
      [pn, rows, outer, out_row](Node& self) {
        for (int64_t o = 0; o < outer; ++o) {
          int64_t off = o * out_row;
          for (size_t p = 0; p < pn.size(); ++p) {
            if (pn[p]->requires_grad) {
              detail::ensure_grad(pn[p].get());
              for (int64_t i = 0; i < (*rows)[p]; ++i) {
                pn[p]->grad[static_cast<size_t>(o * (*rows)[p] + i)] +=
                    self.grad[static_cast<size_t>(off + i)];
              }
            }
            off += (*rows)[p];
          }
        }
      });
}

inline Tensor slice(const Tensor& a, int axis, int start, int stop) {
  const Shape& s = a.shape();
  int r = static_cast<int>(s.size());
  if (axis < 0 || axis >= r) throw std::runtime_error("slice: axis out of range");
  int dim = s[static_cast<size_t>(axis)];
  if (start < 0 || stop > dim || start >= stop) {
    throw std::runtime_error("slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                             ") invalid for axis extent " + std::to_string(dim));
  }
  Shape out_shape = s;
  out_shape[static_cast<size_t>(axis)] = stop - start;
  int64_t outer = 1;
  for (int d = 0; d < axis; ++d) outer *= s[static_cast<size_t>(d)];
  int64_t inner = 1;
  for (int d = axis + 1; d < r; ++d) inner *= s[static_cast<size_t>(d)];
  int64_t in_row = static_cast<int64_t>(dim) * inner;
  int64_t out_row = static_cast<int64_t>(stop - start) * inner;

  std::vector<double> out(static_cast<size_t>(outer * out_row));
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.values().begin() + o * in_row + start * inner, out_row,
                out.begin() + o * out_row);
  }
  auto an = a.node();
  return detail::op_result(std::move(out_shape), std::move(out), {a},
                           [an, outer, in_row, out_row, start, inner](Node& self) {
                             if (!an->requires_grad) return;
                             detail::ensure_grad(an.get());
                             for (int64_t o = 0; o < outer; ++o) {
                               for (int64_t i = 0; i < out_row; ++i) {
                                 an->grad[static_cast<size_t>(o * in_row + start * inner + i)] +=
                                     self.grad[static_cast<size_t>(o * out_row + i)];
                               }
                             }
                           });
}

// ---------------------------------------------------------------------------
// Matrix multiplication

namespace detail {

// C[m,n] (+)= A[m,k] * B[k,n]
inline void gemm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k,
                    int64_t n, bool accumulate) {
  int64_t flops = m * k * n;
  parallel_for(m, flops < 65536 ? m : std::max<int64_t>(1, m / 64), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      double* crow = C + i * n;
      if (!accumulate) std::fill_n(crow, n, 0.0);
      const double* arow = A + i * k;
      for (int64_t p = 0; p < k; ++p) {
        double a = arow[p];
        const double* brow = B + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
inline void gemm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k,
                    int64_t n, bool accumulate) {
  int64_t flops = m * k * n;
  parallel_for(m, flops < 65536 ? m : std::max<int64_t>(1, m / 64), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const double* arow = A + i * k;
      double* crow = C + i * n;
      for (int64_t j = 0; j < n; ++j) {
        const double* brow = B + j * k;
        double s = 0.0;
        for (int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        if (accumulate) crow[j] += s; else crow[j] = s;
      }
    }
  });
}

// C[k,n] (+)= A[m,k]^T * B[m,n]
inline void gemm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k,
                    int64_t n, bool accumulate) {
  int64_t flops = m * k * n;
  parallel_for(k, flops < 65536 ? k : std::max<int64_t>(1, k / 64), [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      double* crow = C + i * n;
      if (!accumulate) std::fill_n(crow, n, 0.0);
      for (int64_t p = 0; p < m; ++p) {
        double a = A[p * k + i];
        const double* brow = B + p * n;
        for (int64_t j = 0; j < n; ++j) crow[j] += a * brow[j];
      }
    }
  });
}

}  // namespace detail

// Batched matrix product. Leading (batch) dims must match exactly, or either
// operand may be rank-2 and is then shared across the other's batch.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) {
    throw std::runtime_error("matmul: operands must have rank >= 2, got " + shape_str(sa) + " x " + shape_str(sb));
  }
  int64_t m = sa[sa.size() - 2], ka = sa[sa.size() - 1];
  int64_t kb = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (ka != kb) {
    throw std::runtime_error("matmul: inner dimensions differ, " + shape_str(sa) + " x " + shape_str(sb));
  }
  Shape batch_a(sa.begin(), sa.end() - 2);
  Shape batch_b(sb.begin(), sb.end() - 2);
  Shape batch;
  bool bcast_a = false, bcast_b = false;
  if (batch_a == batch_b) {
    batch = batch_a;
  } else if (batch_b.empty()) {
    batch = batch_a;
    bcast_b = true;
  } else if (batch_a.empty()) {
    batch = batch_b;
    bcast_a = true;
  } else {
    throw std::runtime_error("matmul: batch dims incompatible, " + shape_str(sa) + " x " + shape_str(sb));
  }
  int64_t nb = shape_numel(batch);
  Shape out_shape = batch;
  out_shape.push_back(static_cast<int>(m));
  out_shape.push_back(static_cast<int>(n));

  std::vector<double> out(static_cast<size_t>(nb * m * n));
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (int64_t t = 0; t < nb; ++t) {
    detail::gemm_nn(A + (bcast_a ? 0 : t * m * ka), B + (bcast_b ? 0 : t * ka * n),
                    out.data() + t * m * n, m, ka, n, false);
  }
  auto an = a.node();
  auto bn = b.node();
  int64_t k = ka;
  return detail::op_result(
      std::move(out_shape), std::move(out), {a, b},
      [an, bn, m, k, n, nb, bcast_a, bcast_b](Node& self) {
        const double* G = self.grad.data();
        if (an->requires_grad) {
          detail::ensure_grad(an.get());
          for (int64_t t = 0; t < nb; ++t) {
            detail::gemm_nt(G + t * m * n, bn->value.data() + (bcast_b ? 0 : t * k * n),
                            an->grad.data() + (bcast_a ? 0 : t * m * k), m, n, k, true);
          }
        }
        if (bn->requires_grad) {
          detail::ensure_grad(bn.get());
          for (int64_t t = 0; t < nb; ++t) {
            detail::gemm_tn(an->value.data() + (bcast_a ? 0 : t * m * k), G + t * m * n,
                            bn->grad.data() + (bcast_b ? 0 : t * k * n), m, k, n, true);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Softmax over the last axis

// -infinity entries are mask sentinels and map to exactly 0. A row that is
// entirely masked is a caller bug and raises.
inline Tensor softmax_rows(const Tensor& x) {
  if (x.rank() < 1) throw std::runtime_error("softmax_rows: rank must be >= 1");
  int64_t cols = x.shape().back();
  int64_t rows = x.size() / cols;
  const auto& v = x.values();
  std::vector<double> out(v.size());
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * cols;
    double* o = out.data() + r * cols;
    double mx = ninf;
    for (int64_t j = 0; j < cols; ++j) {
      double e = in[j];
      if (std::isnan(e) || e == std::numeric_limits<double>::infinity()) {
        throw std::runtime_error("softmax_rows: entries must be finite or -inf");
      }
      mx = std::max(mx, e);
    }
    if (mx == ninf) {
      throw std::runtime_error("softmax_rows: fully masked row " + std::to_string(r));
    }
    double s = 0.0;
    for (int64_t j = 0; j < cols; ++j) {
      double e = in[j] == ninf ? 0.0 : std::exp(in[j] - mx);
      o[j] = e;
      s += e;
    }
    for (int64_t j = 0; j < cols; ++j) o[j] /= s;
  }
  auto xn = x.node();
  return detail::op_result(x.shape(), std::move(out), {x}, [xn, rows, cols](Node& self) {
    if (!xn->requires_grad) return;
    detail::ensure_grad(xn.get());
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * cols;
      const double* g = self.grad.data() + r * cols;
      double dot = 0.0;
      for (int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      double* dx = xn->grad.data() + r * cols;
      for (int64_t j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Layer normalization over the last axis

inline Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw std::runtime_error("layernorm: rank must be >= 1");
  int64_t c = x.shape().back();
  if (gamma.shape() != Shape{static_cast<int>(c)} || beta.shape() != Shape{static_cast<int>(c)}) {
    throw std::runtime_error("layernorm: gamma/beta must have shape [" + std::to_string(c) + "]");
  }
  int64_t rows = x.size() / c;
  const auto& v = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  std::vector<double> out(v.size());
  auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * 2));  // mu, inv_std
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = v.data() + r * c;
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += in[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      double d = in[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[static_cast<size_t>(2 * r)] = mu;
    (*stats)[static_cast<size_t>(2 * r + 1)] = inv;
    double* o = out.data() + r * c;
    for (int64_t j = 0; j < c; ++j) o[j] = (in[j] - mu) * inv * gv[j] + bv[j];
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return detail::op_result(
      x.shape(), std::move(out), {x, gamma, beta}, [xn, gn, bn, stats, rows, c](Node& self) {
        const double cd = static_cast<double>(c);
        for (int64_t r = 0; r < rows; ++r) {
          const double* g = self.grad.data() + r * c;
          const double* in = xn->value.data() + r * c;
          double mu = (*stats)[static_cast<size_t>(2 * r)];
          double inv = (*stats)[static_cast<size_t>(2 * r + 1)];
          if (xn->requires_grad) {
            detail::ensure_grad(xn.get());
            double s1 = 0.0, s2 = 0.0;
            for (int64_t j = 0; j < c; ++j) {
              double xhat = (in[j] - mu) * inv;
              double gh = g[j] * gn->value[static_cast<size_t>(j)];
              s1 += gh;
              s2 += gh * xhat;
            }
            double* dx = xn->grad.data() + r * c;
            for (int64_t j = 0; j < c; ++j) {
              double xhat = (in[j] - mu) * inv;
              double gh = g[j] * gn->value[static_cast<size_t>(j)];
              dx[j] += inv * (gh - s1 / cd - xhat * s2 / cd);
            }
          }
          if (gn->requires_grad) {
            detail::ensure_grad(gn.get());
            for (int64_t j = 0; j < c; ++j) {
              gn->grad[static_cast<size_t>(j)] += g[j] * (in[j] - mu) * inv;
            }
          }
          if (bn->requires_grad) {
            detail::ensure_grad(bn.get());
            for (int64_t j = 0; j < c; ++j) bn->grad[static_cast<size_t>(j)] += g[j];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Backward

// Populates gradients of every grad-requiring node reachable from `loss`.
// Returns the number of nodes visited (each exactly once).
inline int64_t backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw std::runtime_error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  Node* root = loss.node().get();
  if (!root->requires_grad) return 0;

  // Iterative post-order DFS; `order` ends up topologically sorted with
  // parents before users, so we process it in reverse.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* n;
    size_t next;
  };
  std::vector<Frame> stack;
  visited.insert(root);
  stack.push_back({root, 0});
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      Node* p = f.n->parents[f.next++].get();
      if (p->requires_grad && visited.insert(p).second) {
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
  detail::ensure_grad(root);
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop();
  }
  return static_cast<int64_t>(order.size());
}

}  // namespace simtrack
