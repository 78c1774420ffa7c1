#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace har {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);  // "[2x3]"

namespace detail {
struct TensorImpl;
struct TensorAccess;
}  // namespace detail

// Dense real tensor (row-major, 64-bit) with reverse-mode autodiff.
//
// Copies are shallow and alias the same storage. Values are fixed after
// construction except through values_mut(), which exists for optimiser
// updates on parameter leaves. While gradients are enabled, every op whose
// inputs require gradients records a node in a per-forward-pass graph;
// backward() consumes that graph and frees it.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const;
  std::size_t size() const;
  bool is_scalar() const;

  std::span<const double> values() const;
  std::span<double> values_mut();
  double item() const;  // scalar tensors only

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  // Number of times backward passes have accumulated into this tensor's
  // gradient since it was last cleared (equals the tensor's fan-out in the
  // consumed graph).
  std::size_t grad_accumulations() const;

  // Deep copy of the values; drops any recorded graph.
  Tensor detached(bool requires_grad = false) const;

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
  friend struct detail::TensorAccess;
};

struct BackwardStats {
  std::size_t nodes_visited = 0;
  std::size_t grad_accumulations = 0;
};

// Reverse-topological gradient accumulation from a scalar root. Every op
// node reachable from the root fires exactly once, then the graph is torn
// down; running backward again over any part of it is a contract error.
BackwardStats backward(const Tensor& root);

// Scoped switch that disables graph recording on the current thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Matrix product [m x k] * [k x n] -> [m x n]; both operands rank 2.
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise binary ops. Shapes must match exactly, or one operand must
// be a single-element tensor, which is combined with every element of the
// other side; no other broadcasting is performed.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, double b);
Tensor sub(double a, const Tensor& b);
Tensor mul(const Tensor& a, double b);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // contract error on non-positive input

// Softmax over the trailing axis, computed with max subtraction so large
// logits stay finite. Every row sums to 1 within 1e-12.
Tensor softmax(const Tensor& logits);

// Mean over rows of -log softmax(logits)[label], fused through
// log-sum-exp so extreme logits stay finite. Gradient w.r.t. logits is
// (softmax - onehot) / batch. Labels must be < the class count.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// Sum of all elements -> scalar [1].
Tensor sum(const Tensor& x);

// [r x c] matrix plus a length-c vector added to every row.
Tensor add_rowvec(const Tensor& m, const Tensor& v);

// Column-wise concatenation/slicing of rank-2 tensors.
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& m, std::size_t begin, std::size_t end);

// Selects time step t from [B x C x T] -> [B x C].
Tensor select_time(const Tensor& x, std::size_t t);

enum class Padding { valid, same };

// 1-D cross-correlation over the trailing axis. input [B x Cin x T] or
// [Cin x T], kernels [Cout x Cin x K]. "same" pads with zeros so that the
// output length is ceil(T / stride).
Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride,
              Padding padding);

// [B x C x T] plus a length-C vector added to every channel.
Tensor add_chanvec(const Tensor& x, const Tensor& bias);

// Non-overlapping max pooling over the trailing axis; output length
// floor(T / width). Ties route the gradient to the earliest maximum.
Tensor maxpool1d(const Tensor& x, std::size_t width);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator+(const Tensor& a, double b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, double b) { return sub(a, b); }
inline Tensor operator-(double a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, double b) { return mul(a, b); }
inline Tensor operator*(double a, const Tensor& b) { return mul(b, a); }

// Central-difference gradient check of a scalar-valued function. f is
// evaluated twice at x to verify it is deterministic (bit-identical
// results), then the analytic gradient at x is compared against
// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per coordinate. Returns the
// max over coordinates of |analytic - numeric| / max(1, |analytic|,
// |numeric|). eps must lie in [1e-7, 1e-4].
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double eps = 1e-5);

}  // namespace har
