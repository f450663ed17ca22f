#include "unirobust/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "unirobust/error.hpp"

namespace unirobust {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::dimension: return "dimension error";
    case ErrorCode::domain: return "domain error";
    case ErrorCode::contract: return "contract error";
    case ErrorCode::vocabulary: return "vocabulary error";
    case ErrorCode::length: return "length error";
    case ErrorCode::label: return "label error";
    case ErrorCode::config: return "config error";
    case ErrorCode::io: return "io error";
    case ErrorCode::empty: return "empty error";
    case ErrorCode::stage_dependency: return "stage dependency error";
    case ErrorCode::training: return "training error";
    case ErrorCode::conditioning: return "conditioning error";
    case ErrorCode::position: return "position error";
    case ErrorCode::usage: return "usage error";
  }
  return "unknown error";
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_size(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) fail(ErrorCode::dimension, "tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    fail(ErrorCode::dimension, "shape " + shape_string(shape) + " does not match " +
                                   std::to_string(data.size()) + " values");
  }
  auto impl = std::make_shared<detail::Storage>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const auto n = values.size();
  return from({n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  if (rows.empty()) fail(ErrorCode::dimension, "matrix needs at least one row");
  const auto cols = rows.front().size();
  std::vector<double> flat;
  flat.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) fail(ErrorCode::dimension, "ragged matrix rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return from({rows.size(), cols}, std::move(flat), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) fail(ErrorCode::contract, "use of undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::rows() const {
  const auto& s = shape();
  if (s.size() != 2) fail(ErrorCode::dimension, "expected a matrix, got " + shape_string(s));
  return s[0];
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.size() != 2) fail(ErrorCode::dimension, "expected a matrix, got " + shape_string(s));
  return s[1];
}

std::span<const double> Tensor::data() const {
  if (!impl_) fail(ErrorCode::contract, "use of undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) fail(ErrorCode::contract, "use of undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (size() != 1) fail(ErrorCode::contract, "item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.clear();
}

Tensor Tensor::clone() const { return from(shape(), std::vector<double>(data().begin(), data().end())); }

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }
Tape* active_tape() noexcept { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    fail(ErrorCode::contract, "backward needs a scalar loss, got " +
                                  (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) return;
  Tensor seed = loss;
  seed.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(*it);
  }
}

void backward(const Tensor& loss) {
  Tape* tape = active_tape();
  if (!tape) fail(ErrorCode::contract, "backward called without an active tape");
  tape->backward(loss);
}

namespace detail {
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TapeNode&)> rule) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  Tape* tape = active_tape();
  if (!tape) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.set_requires_grad(true);
  tape->record(TapeNode{std::move(inputs), out, std::move(rule)});
  return out;
}
}  // namespace detail

using detail::make_result;

namespace {

// Input i of a node, writable gradient or empty span if it does not need one.
std::span<double> input_grad(const TapeNode& node, std::size_t i) {
  Tensor t = node.inputs[i];
  if (!t.requires_grad()) return {};
  return t.grad_buffer();
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.rank() != 2) fail(ErrorCode::dimension, std::string(what) + " expects a matrix, got " + shape_string(t.shape()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    fail(ErrorCode::dimension, "matmul shape mismatch: " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> c(m * n, 0.0);
  const auto A = a.data();
  const auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &B[p * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(c), {a, b}, [m, k, n](const TapeNode& node) {
    const auto G = node.output.grad();
    const auto A = node.inputs[0].data();
    const auto B = node.inputs[1].data();
    if (auto ga = input_grad(node, 0); !ga.empty()) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
          ga[i * k + p] += s;
        }
    }
    if (auto gb = input_grad(node, 1); !gb.empty()) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * G[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto A = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = A[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](const TapeNode& node) {
    const auto G = node.output.grad();
    auto ga = input_grad(node, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += G[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

enum class Side { same, left_scalar, right_scalar };

Side broadcast_side(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Side::same;
  if (b.size() == 1) return Side::right_scalar;
  if (a.size() == 1) return Side::left_scalar;
  fail(ErrorCode::dimension, std::string(op) + " shape mismatch: " + shape_string(a.shape()) + " and " +
                                 shape_string(b.shape()));
}

enum class BinaryKind { add, sub, mul };

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, BinaryKind kind) {
  const Side side = broadcast_side(a, b, name);
  const Shape shape = side == Side::left_scalar ? b.shape() : a.shape();
  const std::size_t n = shape_size(shape);
  const auto A = a.data();
  const auto B = b.data();
  auto ai = [side, A](std::size_t i) { return side == Side::left_scalar ? A[0] : A[i]; };
  auto bi = [side, B](std::size_t i) { return side == Side::right_scalar ? B[0] : B[i]; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(ai(i), bi(i));
  // d/da and d/db: add gives (1, 1), sub gives (1, -1), mul gives (b, a).
  const double sign_b = kind == BinaryKind::sub ? -1.0 : 1.0;
  const bool product = kind == BinaryKind::mul;
  return make_result(shape, std::move(out), {a, b}, [side, n, sign_b, product](const TapeNode& node) {
    const auto G = node.output.grad();
    const auto A = node.inputs[0].data();
    const auto B = node.inputs[1].data();
    auto ga = input_grad(node, 0);
    auto gb = input_grad(node, 1);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ia = side == Side::left_scalar ? 0 : i;
      const std::size_t ib = side == Side::right_scalar ? 0 : i;
      const double da = product ? B[ib] : 1.0;
      const double db = product ? A[ia] : sign_b;
      if (!ga.empty()) ga[ia] += G[i] * da;
      if (!gb.empty()) gb[ib] += G[i] * db;
    }
  });
}

// Unary op with derivative expressed from (input, output).
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dfdx) {
  const auto A = a.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
  return make_result(a.shape(), std::move(out), {a}, [dfdx](const TapeNode& node) {
    const auto G = node.output.grad();
    const auto X = node.inputs[0].data();
    const auto Y = node.output.data();
    auto ga = input_grad(node, 0);
    for (std::size_t i = 0; i < X.size(); ++i) ga[i] += G[i] * dfdx(X[i], Y[i]);
  });
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; }, BinaryKind::add);
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; }, BinaryKind::sub);
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; }, BinaryKind::mul);
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor max_with_zero(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        return cdf + x * pdf;
      });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  for (double x : a.data()) {
    if (!(x > 0.0)) fail(ErrorCode::domain, "log of non-positive value " + std::to_string(x));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor elementwise(Elementwise op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case Elementwise::add: return add(a, b);
    case Elementwise::sub: return sub(a, b);
    case Elementwise::mul: return mul(a, b);
    case Elementwise::max_with_zero: return max_with_zero(a);
    case Elementwise::tanh: return tanh(a);
    case Elementwise::gelu: return gelu(a);
    case Elementwise::exp: return exp(a);
    case Elementwise::log: return log(a);
  }
  fail(ErrorCode::contract, "unknown elementwise op");
}

Tensor add_row_vector(const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_row_vector");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.size() != n) {
    fail(ErrorCode::dimension, "bias " + shape_string(bias.shape()) + " does not match " + shape_string(x.shape()));
  }
  const auto X = x.data();
  const auto Bv = bias.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = X[i * n + j] + Bv[j];
  return make_result({m, n}, std::move(out), {x, bias}, [m, n](const TapeNode& node) {
    const auto G = node.output.grad();
    auto gx = input_grad(node, 0);
    auto gb = input_grad(node, 1);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (!gx.empty()) gx[i * n + j] += G[i * n + j];
        if (!gb.empty()) gb[j] += G[i * n + j];
      }
  });
}

// ---------------------------------------------------------------------------
// Softmax family

namespace {

// Iterates over the 1-D lanes of `shape` along `axis`: calls f(offset, stride, length).
template <class F>
void for_each_lane(const Shape& shape, std::size_t axis, F f) {
  if (shape.size() == 1) {
    f(std::size_t{0}, std::size_t{1}, shape[0]);
    return;
  }
  const std::size_t m = shape[0], n = shape[1];
  if (axis == 1) {
    for (std::size_t i = 0; i < m; ++i) f(i * n, std::size_t{1}, n);
  } else {
    for (std::size_t j = 0; j < n; ++j) f(j, n, m);
  }
}

}  // namespace

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (x.rank() < 1 || x.rank() > 2 || axis >= x.rank()) {
    fail(ErrorCode::dimension, "softmax axis " + std::to_string(axis) + " invalid for " + shape_string(x.shape()));
  }
  const auto X = x.data();
  std::vector<double> out(X.size());
  for_each_lane(x.shape(), axis, [&](std::size_t off, std::size_t stride, std::size_t len) {
    double mx = X[off];
    for (std::size_t t = 1; t < len; ++t) mx = std::max(mx, X[off + t * stride]);
    double z = 0.0;
    for (std::size_t t = 0; t < len; ++t) z += (out[off + t * stride] = std::exp(X[off + t * stride] - mx));
    for (std::size_t t = 0; t < len; ++t) out[off + t * stride] /= z;
  });
  const Shape shape = x.shape();
  return make_result(shape, std::move(out), {x}, [shape, axis](const TapeNode& node) {
    const auto G = node.output.grad();
    const auto Y = node.output.data();
    auto gx = input_grad(node, 0);
    for_each_lane(shape, axis, [&](std::size_t off, std::size_t stride, std::size_t len) {
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += G[off + t * stride] * Y[off + t * stride];
      for (std::size_t t = 0; t < len; ++t) {
        const auto i = off + t * stride;
        gx[i] += Y[i] * (G[i] - dot);
      }
    });
  });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_matrix(x, "log_softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  const auto X = x.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = &X[i * n];
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xr[j] - lse;
  }
  return make_result({m, n}, std::move(out), {x}, [m, n](const TapeNode& node) {
    const auto G = node.output.grad();
    const auto Y = node.output.data();
    auto gx = input_grad(node, 0);
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += G[i * n + j];
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += G[i * n + j] - std::exp(Y[i * n + j]) * gsum;
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and layout

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({1}, {s}, {a}, [](const TapeNode& node) {
    const double g = node.output.grad()[0];
    for (auto& v : input_grad(node, 0)) v += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    fail(ErrorCode::dimension, "cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  const auto A = a.data();
  return make_result(std::move(shape), std::vector<double>(A.begin(), A.end()), {a}, [](const TapeNode& node) {
    const auto G = node.output.grad();
    auto ga = input_grad(node, 0);
    for (std::size_t i = 0; i < G.size(); ++i) ga[i] += G[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const int> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t rows = table.rows(), n = table.cols();
  if (ids.empty()) fail(ErrorCode::dimension, "gather_rows needs at least one id");
  const auto T = table.data();
  std::vector<double> out(ids.size() * n);
  std::vector<std::size_t> idx(ids.size());
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] < 0 || static_cast<std::size_t>(ids[r]) >= rows) {
      fail(ErrorCode::vocabulary, "row id " + std::to_string(ids[r]) + " outside table of " + std::to_string(rows));
    }
    idx[r] = static_cast<std::size_t>(ids[r]);
    std::copy_n(&T[idx[r] * n], n, &out[r * n]);
  }
  return make_result({ids.size(), n}, std::move(out), {table}, [idx = std::move(idx), n](const TapeNode& node) {
    const auto G = node.output.grad();
    auto gt = input_grad(node, 0);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) gt[idx[r] * n + j] += G[r * n + j];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || begin + count > n) {
    fail(ErrorCode::dimension, "column slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                   ") outside " + shape_string(x.shape()));
  }
  const auto X = x.data();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&X[i * n + begin], count, &out[i * count]);
  return make_result({m, count}, std::move(out), {x}, [m, n, begin, count](const TapeNode& node) {
    const auto G = node.output.grad();
    auto gx = input_grad(node, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) gx[i * n + begin + j] += G[i * count + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorCode::dimension, "concat_cols of nothing");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) fail(ErrorCode::dimension, "concat_cols row mismatch: " + shape_string(p.shape()));
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const auto P = p.data();
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(&P[i * w], w, &out[i * n + offset]);
    offset += w;
  }
  return make_result({m, n}, std::move(out), parts, [m, n, offsets](const TapeNode& node) {
    const auto G = node.output.grad();
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      auto gp = input_grad(node, k);
      if (gp.empty()) continue;
      const std::size_t w = node.inputs[k].cols();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += G[i * n + offsets[k] + j];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) fail(ErrorCode::dimension, "concat_rows of nothing");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) fail(ErrorCode::dimension, "concat_rows column mismatch: " + shape_string(p.shape()));
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result({m, n}, std::move(out), parts, [](const TapeNode& node) {
    const auto G = node.output.grad();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t len = node.inputs[k].size();
      auto gp = input_grad(node, k);
      if (!gp.empty())
        for (std::size_t i = 0; i < len; ++i) gp[i] += G[offset + i];
      offset += len;
    }
  });
}

Tensor row(const Tensor& x, std::size_t index) {
  require_matrix(x, "row");
  const std::size_t m = x.rows(), n = x.cols();
  if (index >= m) fail(ErrorCode::dimension, "row " + std::to_string(index) + " outside " + shape_string(x.shape()));
  const auto X = x.data();
  std::vector<double> out(X.begin() + index * n, X.begin() + (index + 1) * n);
  return make_result({n}, std::move(out), {x}, [index, n](const TapeNode& node) {
    const auto G = node.output.grad();
    auto gx = input_grad(node, 0);
    for (std::size_t j = 0; j < n; ++j) gx[index * n + j] += G[j];
  });
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  const std::size_t m = x.rows(), n = x.cols();
  const auto X = x.data();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += X[i * n + j];
  for (auto& v : out) v /= static_cast<double>(m);
  return make_result({n}, std::move(out), {x}, [m, n](const TapeNode& node) {
    const auto G = node.output.grad();
    auto gx = input_grad(node, 0);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += G[j] * inv;
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& offset, double eps) {
  require_matrix(x, "layer_norm");
  const std::size_t m = x.rows(), n = x.cols();
  if (gain.size() != n || offset.size() != n) {
    fail(ErrorCode::dimension, "layer_norm parameters do not match " + shape_string(x.shape()));
  }
  const auto X = x.data();
  const auto Gm = gain.data();
  const auto Bt = offset.data();
  std::vector<double> out(m * n);
  // Normalized values and inverse std per row, kept for the backward rule.
  std::vector<double> xhat(m * n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += X[i * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (X[i * n + j] - mu) * (X[i * n + j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[i * n + j] = (X[i * n + j] - mu) * inv_std[i];
      out[i * n + j] = xhat[i * n + j] * Gm[j] + Bt[j];
    }
  }
  return make_result(
      {m, n}, std::move(out), {x, gain, offset},
      [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](const TapeNode& node) {
        const auto G = node.output.grad();
        const auto Gm = node.inputs[1].data();
        auto gx = input_grad(node, 0);
        auto gg = input_grad(node, 1);
        auto gb = input_grad(node, 2);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < m; ++i) {
          double sum_dy = 0.0, sum_dy_xhat = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double g = G[i * n + j];
            if (!gg.empty()) gg[j] += g * xhat[i * n + j];
            if (!gb.empty()) gb[j] += g;
            const double dy = g * Gm[j];
            sum_dy += dy;
            sum_dy_xhat += dy * xhat[i * n + j];
          }
          if (gx.empty()) continue;
          for (std::size_t j = 0; j < n; ++j) {
            const double dy = G[i * n + j] * Gm[j];
            gx[i * n + j] += inv_std[i] * (dy - inv_n * sum_dy - xhat[i * n + j] * inv_n * sum_dy_xhat);
          }
        }
      });
}

}  // namespace unirobust
