#include "har/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <unordered_set>

#include "har/error.hpp"
#include "kernels.hpp"

namespace har {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(shape[i]);
  }
  s += ']';
  return s;
}

namespace detail {

struct Node {
  const char* op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(TensorImpl&)> backprop;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;
  std::size_t grad_accums = 0;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

struct TensorAccess {
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) {
    return t.impl_;
  }
  static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
    return Tensor(std::move(impl));
  }
};

}  // namespace detail

using detail::Node;
using detail::TensorAccess;
using detail::TensorImpl;

namespace {

thread_local int t_nograd_depth = 0;
thread_local BackwardStats* t_stats = nullptr;

const std::shared_ptr<TensorImpl>& impl_of(const Tensor& t) {
  const auto& p = TensorAccess::impl(t);
  if (!p) throw_contract("tensor: operation on a default-constructed tensor");
  return p;
}

std::shared_ptr<TensorImpl> make_impl(Shape shape, std::vector<double> values,
                                      bool requires_grad) {
  if (shape.empty()) throw_contract("tensor: shape must have at least one axis");
  for (std::size_t d : shape) {
    if (d == 0) throw_contract("tensor: shape " + shape_str(shape) +
                               " has a zero-sized axis");
  }
  if (values.size() != shape_size(shape)) {
    throw_contract("tensor: " + std::to_string(values.size()) +
                   " values do not fill shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  return impl;
}

// Zero-initialises the gradient buffer on first use and counts the
// accumulation event.
double* grad_buf(TensorImpl& t) {
  if (t.grad.empty()) t.grad.assign(t.values.size(), 0.0);
  ++t.grad_accums;
  if (t_stats) ++t_stats->grad_accumulations;
  return t.grad.data();
}

void axpy(double* dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<std::shared_ptr<TensorImpl>> inputs,
                   std::function<void(TensorImpl&)> backprop) {
  auto out = make_impl(std::move(shape), std::move(values), false);
  if (grad_enabled()) {
    bool needs = false;
    for (const auto& in : inputs)
      if (in->requires_grad) needs = true;
    if (needs) {
      out->requires_grad = true;
      auto node = std::make_shared<Node>();
      node->op = op;
      node->inputs = std::move(inputs);
      node->backprop = std::move(backprop);
      out->node = std::move(node);
    }
  }
  return TensorAccess::wrap(std::move(out));
}

void check_same_shape(const char* op, const TensorImpl& a,
                      const TensorImpl& b) {
  if (a.shape != b.shape) {
    throw_contract(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                   " vs " + shape_str(b.shape));
  }
}

// Elementwise binary op with the scalar-operand special case: either both
// shapes match exactly or one side has a single element.
template <class Fwd, class BackA, class BackB>
Tensor binary_op(const char* op, const Tensor& ta, const Tensor& tb, Fwd fwd,
                 BackA back_a, BackB back_b) {
  auto a = impl_of(ta);
  auto b = impl_of(tb);
  const bool a_scalar = a->values.size() == 1;
  const bool b_scalar = b->values.size() == 1;
  if (!a_scalar && !b_scalar) check_same_shape(op, *a, *b);
  const Shape& out_shape = a_scalar && !b_scalar ? b->shape : a->shape;
  const std::size_t n = shape_size(out_shape);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double av = a->values[a_scalar ? 0 : i];
    double bv = b->values[b_scalar ? 0 : i];
    out[i] = fwd(av, bv);
  }
  return make_result(
      op, out_shape, std::move(out), {a, b},
      [a, b, a_scalar, b_scalar, back_a, back_b](TensorImpl& o) {
        const std::size_t n = o.values.size();
        if (a->requires_grad) {
          double* ga = grad_buf(*a);
          for (std::size_t i = 0; i < n; ++i) {
            double av = a->values[a_scalar ? 0 : i];
            double bv = b->values[b_scalar ? 0 : i];
            ga[a_scalar ? 0 : i] += o.grad[i] * back_a(av, bv);
          }
        }
        if (b->requires_grad) {
          double* gb = grad_buf(*b);
          for (std::size_t i = 0; i < n; ++i) {
            double av = a->values[a_scalar ? 0 : i];
            double bv = b->values[b_scalar ? 0 : i];
            gb[b_scalar ? 0 : i] += o.grad[i] * back_b(av, bv);
          }
        }
      });
}

// Elementwise unary op whose derivative is written in terms of (x, y).
template <class Fwd, class Back>
Tensor unary_op(const char* op, const Tensor& tx, Fwd fwd, Back back) {
  auto x = impl_of(tx);
  const std::size_t n = x->values.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x->values[i]);
  return make_result(op, x->shape, std::move(out), {x},
                     [x, back](TensorImpl& o) {
                       if (!x->requires_grad) return;
                       double* gx = grad_buf(*x);
                       for (std::size_t i = 0; i < o.values.size(); ++i) {
                         gx[i] += o.grad[i] * back(x->values[i], o.values[i]);
                       }
                     });
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> v(shape_size(shape), 0.0);
  return TensorAccess::wrap(make_impl(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(shape_size(shape), value);
  return TensorAccess::wrap(make_impl(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  return TensorAccess::wrap(
      make_impl(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return impl_of(*this)->shape; }
std::size_t Tensor::rank() const { return impl_of(*this)->shape.size(); }
std::size_t Tensor::size() const { return impl_of(*this)->values.size(); }
bool Tensor::is_scalar() const { return size() == 1; }

std::span<const double> Tensor::values() const { return impl_of(*this)->values; }
std::span<double> Tensor::values_mut() { return impl_of(*this)->values; }

double Tensor::item() const {
  auto& impl = impl_of(*this);
  if (impl->values.size() != 1) {
    throw_contract("tensor: item() on non-scalar shape " +
                   shape_str(impl->shape));
  }
  return impl->values[0];
}

bool Tensor::requires_grad() const { return impl_of(*this)->requires_grad; }
bool Tensor::has_grad() const { return !impl_of(*this)->grad.empty(); }

std::span<const double> Tensor::grad() const {
  auto& impl = impl_of(*this);
  if (impl->grad.empty()) {
    throw_contract("tensor: gradient has not been computed");
  }
  return impl->grad;
}

void Tensor::zero_grad() {
  auto& impl = impl_of(*this);
  impl->grad.clear();
  impl->grad_accums = 0;
}

std::size_t Tensor::grad_accumulations() const {
  return impl_of(*this)->grad_accums;
}

Tensor Tensor::detached(bool requires_grad) const {
  auto& impl = impl_of(*this);
  return from_values(impl->shape, impl->values, requires_grad);
}

bool grad_enabled() { return t_nograd_depth == 0; }
NoGradGuard::NoGradGuard() { ++t_nograd_depth; }
NoGradGuard::~NoGradGuard() { --t_nograd_depth; }

BackwardStats backward(const Tensor& root) {
  auto r = impl_of(root);
  if (r->values.size() != 1) {
    throw_contract("backward: root must be scalar, got shape " +
                   shape_str(r->shape));
  }
  if (!r->node) {
    if (r->requires_grad) {
      // A lone leaf: its gradient w.r.t. itself is 1.
      r->grad.assign(1, 1.0);
      return {};
    }
    throw_contract("backward: root does not depend on any differentiable input");
  }

  // Post-order DFS; the reversed order is a valid reverse-topological
  // schedule. Holding shared_ptrs keeps intermediates alive while nodes
  // are dismantled below.
  std::vector<std::pair<std::shared_ptr<TensorImpl>, Node*>> order;
  std::unordered_set<TensorImpl*> seen;
  struct Frame {
    std::shared_ptr<TensorImpl> t;
    std::size_t next = 0;
  };
  std::vector<Frame> stack;
  stack.push_back({r, 0});
  seen.insert(r.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    Node* node = f.t->node.get();
    if (node && node->consumed) {
      throw_contract(std::string("backward: graph through op '") + node->op +
                     "' was already consumed by a previous backward pass");
    }
    if (!node || f.next >= node->inputs.size()) {
      if (node) order.emplace_back(f.t, node);
      stack.pop_back();
      continue;
    }
    auto& in = node->inputs[f.next++];
    if (in->node && seen.insert(in.get()).second) {
      stack.push_back({in, 0});
    } else if (in->node && in->node->consumed) {
      throw_contract(std::string("backward: graph through op '") +
                     in->node->op +
                     "' was already consumed by a previous backward pass");
    }
  }

  BackwardStats stats;
  t_stats = &stats;
  r->grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl& out = *it->first;
    Node* node = it->second;
    if (out.grad.empty()) out.grad.assign(out.values.size(), 0.0);
    node->backprop(out);
    node->consumed = true;
    node->backprop = nullptr;
    node->inputs.clear();
    ++stats.nodes_visited;
  }
  t_stats = nullptr;
  return stats;
}

Tensor matmul(const Tensor& ta, const Tensor& tb) {
  auto a = impl_of(ta);
  auto b = impl_of(tb);
  if (a->shape.size() != 2 || b->shape.size() != 2 ||
      a->shape[1] != b->shape[0]) {
    throw_contract("matmul: incompatible shapes " + shape_str(a->shape) +
                   " vs " + shape_str(b->shape));
  }
  const std::size_t m = a->shape[0], k = a->shape[1], n = b->shape[1];
  std::vector<double> out(m * n, 0.0);
  kern::gemm_acc(a->values.data(), b->values.data(), out.data(), m, k, n);
  return make_result(
      "matmul", {m, n}, std::move(out), {a, b},
      [a, b, m, k, n](TensorImpl& o) {
        if (a->requires_grad) {
          kern::gemm_abt_acc(o.grad.data(), b->values.data(), grad_buf(*a), m,
                             n, k);
        }
        if (b->requires_grad) {
          kern::gemm_atb_acc(a->values.data(), o.grad.data(), grad_buf(*b), m,
                             k, n);
        }
      });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor add(const Tensor& a, double b) {
  return unary_op(
      "add_const", a, [b](double x) { return x + b; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor sub(double a, const Tensor& b) {
  return unary_op(
      "rsub_const", b, [a](double x) { return a - x; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, double b) {
  return unary_op(
      "mul_const", a, [b](double x) { return x * b; },
      [b](double, double) { return b; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  for (double v : impl_of(x)->values) {
    if (!(v > 0.0)) {
      throw_contract("log: input must be strictly positive, got " +
                     std::to_string(v));
    }
  }
  return unary_op(
      "log", x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor softmax(const Tensor& tx) {
  auto x = impl_of(tx);
  const std::size_t k = x->shape.back();
  const std::size_t rows = x->values.size() / k;
  std::vector<double> out(x->values.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x->values.data() + r * k;
    double* orow = out.data() + r * k;
    double mx = row[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      orow[i] = std::exp(row[i] - mx);
      s += orow[i];
    }
    for (std::size_t i = 0; i < k; ++i) orow[i] /= s;
  }
  return make_result(
      "softmax", x->shape, std::move(out), {x}, [x, k](TensorImpl& o) {
        if (!x->requires_grad) return;
        double* gx = grad_buf(*x);
        const std::size_t rows = o.values.size() / k;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* s = o.values.data() + r * k;
          const double* g = o.grad.data() + r * k;
          double dot = 0.0;
          for (std::size_t i = 0; i < k; ++i) dot += g[i] * s[i];
          for (std::size_t i = 0; i < k; ++i) {
            gx[r * k + i] += s[i] * (g[i] - dot);
          }
        }
      });
}

Tensor sum(const Tensor& tx) {
  auto x = impl_of(tx);
  double s = 0.0;
  for (double v : x->values) s += v;
  return make_result("sum", {1}, {s}, {x}, [x](TensorImpl& o) {
    if (!x->requires_grad) return;
    double* gx = grad_buf(*x);
    const double g = o.grad[0];
    for (std::size_t i = 0; i < x->values.size(); ++i) gx[i] += g;
  });
}

Tensor cross_entropy(const Tensor& tlogits,
                     std::span<const std::size_t> labels) {
  auto x = impl_of(tlogits);
  if (x->shape.size() != 2) {
    throw_contract("cross_entropy: logits must be [batch x classes], got " +
                   shape_str(x->shape));
  }
  const std::size_t b = x->shape[0], k = x->shape[1];
  if (labels.size() != b) {
    throw_contract("cross_entropy: " + std::to_string(labels.size()) +
                   " labels for a batch of " + std::to_string(b));
  }
  auto probs = std::make_shared<std::vector<double>>(b * k);
  auto labs = std::make_shared<std::vector<std::size_t>>(labels.begin(),
                                                         labels.end());
  double loss = 0.0;
  for (std::size_t r = 0; r < b; ++r) {
    const std::size_t lab = (*labs)[r];
    if (lab >= k) {
      throw_contract("cross_entropy: label " + std::to_string(lab) +
                     " out of range for " + std::to_string(k) + " classes");
    }
    const double* row = x->values.data() + r * k;
    double* prow = probs->data() + r * k;
    double mx = row[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      prow[i] = std::exp(row[i] - mx);
      s += prow[i];
    }
    for (std::size_t i = 0; i < k; ++i) prow[i] /= s;
    loss += (std::log(s) + mx) - row[lab];  // log-sum-exp minus the logit
  }
  loss /= static_cast<double>(b);
  return make_result(
      "cross_entropy", {1}, {loss}, {x},
      [x, probs, labs, b, k](TensorImpl& o) {
        if (!x->requires_grad) return;
        double* gx = grad_buf(*x);
        const double g = o.grad[0] / static_cast<double>(b);
        for (std::size_t r = 0; r < b; ++r) {
          const double* prow = probs->data() + r * k;
          const std::size_t lab = (*labs)[r];
          for (std::size_t i = 0; i < k; ++i) {
            gx[r * k + i] += g * (prow[i] - (i == lab ? 1.0 : 0.0));
          }
        }
      });
}

Tensor add_rowvec(const Tensor& tm, const Tensor& tv) {
  auto m = impl_of(tm);
  auto v = impl_of(tv);
  if (m->shape.size() != 2 || v->shape.size() != 1 ||
      v->shape[0] != m->shape[1]) {
    throw_contract("add_rowvec: incompatible shapes " + shape_str(m->shape) +
                   " vs " + shape_str(v->shape));
  }
  const std::size_t r = m->shape[0], c = m->shape[1];
  std::vector<double> out(m->values);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += v->values[j];
  }
  return make_result("add_rowvec", m->shape, std::move(out), {m, v},
                     [m, v, r, c](TensorImpl& o) {
                       if (m->requires_grad) axpy(grad_buf(*m), o.grad);
                       if (v->requires_grad) {
                         double* gv = grad_buf(*v);
                         for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < c; ++j) {
                             gv[j] += o.grad[i * c + j];
                           }
                         }
                       }
                     });
}

Tensor concat_cols(const Tensor& ta, const Tensor& tb) {
  auto a = impl_of(ta);
  auto b = impl_of(tb);
  if (a->shape.size() != 2 || b->shape.size() != 2 ||
      a->shape[0] != b->shape[0]) {
    throw_contract("concat_cols: incompatible shapes " + shape_str(a->shape) +
                   " vs " + shape_str(b->shape));
  }
  const std::size_t r = a->shape[0], ca = a->shape[1], cb = b->shape[1];
  std::vector<double> out(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    std::memcpy(out.data() + i * (ca + cb), a->values.data() + i * ca,
                ca * sizeof(double));
    std::memcpy(out.data() + i * (ca + cb) + ca, b->values.data() + i * cb,
                cb * sizeof(double));
  }
  return make_result(
      "concat_cols", {r, ca + cb}, std::move(out), {a, b},
      [a, b, r, ca, cb](TensorImpl& o) {
        if (a->requires_grad) {
          double* ga = grad_buf(*a);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < ca; ++j) {
              ga[i * ca + j] += o.grad[i * (ca + cb) + j];
            }
          }
        }
        if (b->requires_grad) {
          double* gb = grad_buf(*b);
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < cb; ++j) {
              gb[i * cb + j] += o.grad[i * (ca + cb) + ca + j];
            }
          }
        }
      });
}

Tensor slice_cols(const Tensor& tm, std::size_t begin, std::size_t end) {
  auto m = impl_of(tm);
  if (m->shape.size() != 2 || begin >= end || end > m->shape[1]) {
    throw_contract("slice_cols: range [" + std::to_string(begin) + ", " +
                   std::to_string(end) + ") invalid for shape " +
                   shape_str(m->shape));
  }
  const std::size_t r = m->shape[0], c = m->shape[1], w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) {
    std::memcpy(out.data() + i * w, m->values.data() + i * c + begin,
                w * sizeof(double));
  }
  return make_result("slice_cols", {r, w}, std::move(out), {m},
                     [m, begin, r, c, w](TensorImpl& o) {
                       if (!m->requires_grad) return;
                       double* gm = grad_buf(*m);
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < w; ++j) {
                           gm[i * c + begin + j] += o.grad[i * w + j];
                         }
                       }
                     });
}

Tensor select_time(const Tensor& tx, std::size_t t) {
  auto x = impl_of(tx);
  if (x->shape.size() != 3 || t >= x->shape[2]) {
    throw_contract("select_time: step " + std::to_string(t) +
                   " out of range for shape " + shape_str(x->shape));
  }
  const std::size_t b = x->shape[0], c = x->shape[1], tt = x->shape[2];
  std::vector<double> out(b * c);
  for (std::size_t i = 0; i < b * c; ++i) out[i] = x->values[i * tt + t];
  return make_result("select_time", {b, c}, std::move(out), {x},
                     [x, t, tt](TensorImpl& o) {
                       if (!x->requires_grad) return;
                       double* gx = grad_buf(*x);
                       for (std::size_t i = 0; i < o.values.size(); ++i) {
                         gx[i * tt + t] += o.grad[i];
                       }
                     });
}

Tensor conv1d(const Tensor& tin, const Tensor& tker, std::size_t stride,
              Padding padding) {
  auto xin = impl_of(tin);
  auto w = impl_of(tker);
  if (stride == 0) throw_contract("conv1d: stride must be positive");
  if (w->shape.size() != 3) {
    throw_contract("conv1d: kernels must be [out x in x k], got " +
                   shape_str(w->shape));
  }
  const bool batched = xin->shape.size() == 3;
  if (!batched && xin->shape.size() != 2) {
    throw_contract("conv1d: input must be [batch x channels x time] or "
                   "[channels x time], got " +
                   shape_str(xin->shape));
  }
  const std::size_t b = batched ? xin->shape[0] : 1;
  const std::size_t cin = xin->shape[batched ? 1 : 0];
  const std::size_t t = xin->shape[batched ? 2 : 1];
  const std::size_t cout = w->shape[0], k = w->shape[2];
  if (w->shape[1] != cin) {
    throw_contract("conv1d: kernel channels " + shape_str(w->shape) +
                   " do not match input " + shape_str(xin->shape));
  }
  std::size_t pad_left = 0, t_out = 0;
  if (padding == Padding::same) {
    t_out = (t + stride - 1) / stride;
    const std::size_t span = (t_out - 1) * stride + k;
    const std::size_t total = span > t ? span - t : 0;
    pad_left = total / 2;
  } else {
    if (t < k) {
      throw_contract("conv1d: kernel size " + std::to_string(k) +
                     " exceeds input length " + std::to_string(t));
    }
    t_out = (t - k) / stride + 1;
  }

  // Accumulation runs in plain definition order (channel-major, then tap)
  // so results reproduce a straightforward reference implementation
  // exactly, not just to rounding.
  std::vector<double> out(b * cout * t_out, 0.0);
  const double* xv = xin->values.data();
  const double* wv = w->values.data();
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* orow = out.data() + (ib * cout + co) * t_out;
      for (std::size_t to = 0; to < t_out; ++to) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(to * stride) -
                                   static_cast<std::ptrdiff_t>(pad_left);
        double acc = 0.0;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* xrow = xv + (ib * cin + ci) * t;
          const double* wrow = wv + (co * cin + ci) * k;
          for (std::size_t j = 0; j < k; ++j) {
            const std::ptrdiff_t idx = off + static_cast<std::ptrdiff_t>(j);
            if (idx >= 0 && idx < static_cast<std::ptrdiff_t>(t)) {
              acc += xrow[idx] * wrow[j];
            }
          }
        }
        orow[to] = acc;
      }
    }
  }

  Shape out_shape = batched ? Shape{b, cout, t_out} : Shape{cout, t_out};
  return make_result(
      "conv1d", std::move(out_shape), std::move(out), {xin, w},
      [xin, w, b, cin, t, cout, k, t_out, stride, pad_left](TensorImpl& o) {
        double* gx = xin->requires_grad ? grad_buf(*xin) : nullptr;
        double* gw = w->requires_grad ? grad_buf(*w) : nullptr;
        if (!gx && !gw) return;
        const double* xv = xin->values.data();
        const double* wv = w->values.data();
        for (std::size_t ib = 0; ib < b; ++ib) {
          for (std::size_t co = 0; co < cout; ++co) {
            const double* grow = o.grad.data() + (ib * cout + co) * t_out;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double* xrow = xv + (ib * cin + ci) * t;
              const double* wrow = wv + (co * cin + ci) * k;
              for (std::size_t to = 0; to < t_out; ++to) {
                const double g = grow[to];
                if (g == 0.0) continue;
                const std::ptrdiff_t off =
                    static_cast<std::ptrdiff_t>(to * stride) -
                    static_cast<std::ptrdiff_t>(pad_left);
                for (std::size_t j = 0; j < k; ++j) {
                  const std::ptrdiff_t idx =
                      off + static_cast<std::ptrdiff_t>(j);
                  if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(t)) {
                    continue;
                  }
                  if (gw) gw[(co * cin + ci) * k + j] += g * xrow[idx];
                  if (gx) gx[(ib * cin + ci) * t + idx] += g * wrow[j];
                }
              }
            }
          }
        }
      });
}

Tensor add_chanvec(const Tensor& tx, const Tensor& tb) {
  auto x = impl_of(tx);
  auto bias = impl_of(tb);
  const bool batched = x->shape.size() == 3;
  if ((!batched && x->shape.size() != 2) || bias->shape.size() != 1 ||
      bias->shape[0] != x->shape[batched ? 1 : 0]) {
    throw_contract("add_chanvec: incompatible shapes " + shape_str(x->shape) +
                   " vs " + shape_str(bias->shape));
  }
  const std::size_t b = batched ? x->shape[0] : 1;
  const std::size_t c = x->shape[batched ? 1 : 0];
  const std::size_t t = x->shape[batched ? 2 : 1];
  std::vector<double> out(x->values);
  for (std::size_t i = 0; i < b * c; ++i) {
    const double bv = bias->values[i % c];
    for (std::size_t j = 0; j < t; ++j) out[i * t + j] += bv;
  }
  return make_result("add_chanvec", x->shape, std::move(out), {x, bias},
                     [x, bias, b, c, t](TensorImpl& o) {
                       if (x->requires_grad) axpy(grad_buf(*x), o.grad);
                       if (bias->requires_grad) {
                         double* gb = grad_buf(*bias);
                         for (std::size_t i = 0; i < b * c; ++i) {
                           double s = 0.0;
                           for (std::size_t j = 0; j < t; ++j) {
                             s += o.grad[i * t + j];
                           }
                           gb[i % c] += s;
                         }
                       }
                     });
}

Tensor maxpool1d(const Tensor& tx, std::size_t width) {
  auto x = impl_of(tx);
  const bool batched = x->shape.size() == 3;
  if (!batched && x->shape.size() != 2) {
    throw_contract("maxpool1d: input must be rank 2 or 3, got " +
                   shape_str(x->shape));
  }
  const std::size_t t = x->shape.back();
  if (width == 0 || width > t) {
    throw_contract("maxpool1d: width " + std::to_string(width) +
                   " invalid for input length " + std::to_string(t));
  }
  const std::size_t rows = x->values.size() / t;
  const std::size_t t_out = t / width;
  std::vector<double> out(rows * t_out);
  auto argmax = std::make_shared<std::vector<std::size_t>>(rows * t_out);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xrow = x->values.data() + r * t;
    for (std::size_t to = 0; to < t_out; ++to) {
      std::size_t best = to * width;
      for (std::size_t j = 1; j < width; ++j) {
        if (xrow[to * width + j] > xrow[best]) best = to * width + j;
      }
      out[r * t_out + to] = xrow[best];
      (*argmax)[r * t_out + to] = r * t + best;
    }
  }
  Shape out_shape = x->shape;
  out_shape.back() = t_out;
  return make_result("maxpool1d", std::move(out_shape), std::move(out), {x},
                     [x, argmax](TensorImpl& o) {
                       if (!x->requires_grad) return;
                       double* gx = grad_buf(*x);
                       for (std::size_t i = 0; i < o.values.size(); ++i) {
                         gx[(*argmax)[i]] += o.grad[i];
                       }
                     });
}

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) {
    throw_contract("grad_check: eps must lie in [1e-7, 1e-4], got " +
                   std::to_string(eps));
  }

  auto eval_plain = [&](const Tensor& at) {
    NoGradGuard ng;
    Tensor y = f(at);
    if (!y.is_scalar()) {
      throw_contract("grad_check: f must return a scalar, got shape " +
                     shape_str(y.shape()));
    }
    return y.item();
  };

  // Determinism probe: two evaluations at the same point must agree
  // bit-for-bit, otherwise finite differences are meaningless.
  const Tensor probe = x.detached(false);
  const double y1 = eval_plain(probe);
  const double y2 = eval_plain(probe);
  if (std::memcmp(&y1, &y2, sizeof(double)) != 0) {
    throw_contract("grad_check: f is not deterministic (two evaluations "
                   "differ)");
  }

  Tensor xg = x.detached(true);
  Tensor y = f(xg);
  if (!y.is_scalar()) {
    throw_contract("grad_check: f must return a scalar, got shape " +
                   shape_str(y.shape()));
  }
  backward(y);
  std::vector<double> analytic(xg.grad().begin(), xg.grad().end());

  double worst = 0.0;
  std::vector<double> base(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> vp = base, vm = base;
    vp[i] += eps;
    vm[i] -= eps;
    const double fp = eval_plain(Tensor::from_values(x.shape(), std::move(vp)));
    const double fm = eval_plain(Tensor::from_values(x.shape(), std::move(vm)));
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max(1.0, std::max(std::abs(analytic[i]), std::abs(numeric)));
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace har
