#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap shared handle onto row-major storage. Operations record
// themselves on the calling thread's active Tape (see TapeScope) when at least
// one input requires a gradient; with no active tape they run as plain
// arithmetic, which is how inference and attack queries execute.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace unirobust {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {
struct Storage {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
};
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);
  // 1-D tensor of length values.size().
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  // 2-D tensor from nested rows; all rows must share a length.
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const { return data().size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Direct write access; used by optimizers and projections between passes.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  // Zero-length span when no gradient has been accumulated.
  std::span<const double> grad() const;
  std::span<double> grad_buffer();  // allocates zeros on first use
  void zero_grad();

  // Deep copy of the values; the copy is a fresh leaf without gradient.
  Tensor clone() const;
  // Same storage identity check.
  bool same(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Storage> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::Storage> impl_;
};

// Recorded operation: inputs, output and a rule that reads output.grad() and
// accumulates into every input that requires a gradient.
struct TapeNode {
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void(const TapeNode&)> backward;
};

class Tape {
 public:
  void record(TapeNode node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays backward rules in reverse order.
  // Gradients accumulate additively into leaves.
  void backward(const Tensor& loss);

 private:
  std::vector<TapeNode> nodes_;
};

// Installs a tape as the thread's active tape for the lifetime of the scope.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape() noexcept;

// Runs backward on the active tape. Throws contract error for a non-scalar
// loss or when no tape is active.
void backward(const Tensor& loss);

namespace detail {
// Allocates a result tensor and, when recording applies, registers the
// backward rule. Used by op implementations across modules.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TapeNode&)> backward);
}  // namespace detail

// ---------------------------------------------------------------------------
// Operations

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

enum class Elementwise { add, sub, mul, max_with_zero, tanh, gelu, exp, log };

// Binary ops accept same-shape inputs or a single-element operand on either
// side. Unary ops ignore the second argument.
Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor max_with_zero(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);  // x * Phi(x), exact erf form
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

// [m x n] + [n], the bias of a Linear layer.
Tensor add_row_vector(const Tensor& x, const Tensor& bias);

// Softmax along `axis` (0 or 1 for matrices, 0 for vectors), max-subtracted.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax_rows(const Tensor& x);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor reshape(const Tensor& a, Shape shape);
Tensor gather_rows(const Tensor& table, std::span<const int> ids);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor row(const Tensor& x, std::size_t index);  // [m x n] -> [n]
Tensor mean_rows(const Tensor& x);               // [m x n] -> [n]

// Per-row layer normalization with learned gain and offset, both [n].
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps = 1e-12);

}  // namespace unirobust
