#include "unirobust/losses.hpp"

#include <algorithm>
#include <cmath>

#include "unirobust/error.hpp"

namespace unirobust {

namespace {

void check_targets(const Tensor& logits, std::span<const int> targets) {
  if (logits.rank() != 2) fail(ErrorCode::dimension, "loss expects [n x classes] logits, got " + shape_string(logits.shape()));
  if (targets.size() != logits.rows()) {
    fail(ErrorCode::dimension, std::to_string(targets.size()) + " targets for " + shape_string(logits.shape()) + " logits");
  }
  for (int t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= logits.cols()) {
      fail(ErrorCode::label, "target " + std::to_string(t) + " outside [0, " + std::to_string(logits.cols()) + ")");
    }
  }
}

}  // namespace

void MarginLossConfig::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) fail(ErrorCode::config, "epsilon must be a finite value >= 0");
}

Tensor multi_margin_loss(const Tensor& logits, std::span<const int> targets, double epsilon) {
  check_targets(logits, targets);
  if (!(epsilon >= 0.0)) fail(ErrorCode::config, "epsilon must be >= 0");
  const std::size_t n = logits.rows(), c = logits.cols();
  const auto Y = logits.data();
  double total = 0.0;
  // Active hinge indicators, reused by the backward rule.
  std::vector<unsigned char> active(n * c, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = static_cast<std::size_t>(targets[i]);
    for (std::size_t j = 0; j < c; ++j) {
      if (j == t) continue;
      const double slack = Y[i * c + j] + epsilon - Y[i * c + t];
      if (slack > 0.0) {
        total += slack;
        active[i * c + j] = 1;
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<int> tgt(targets.begin(), targets.end());
  return detail::make_result({1}, {total * inv_n}, {logits},
                             [n, c, inv_n, active = std::move(active), tgt = std::move(tgt)](const TapeNode& node) {
                               const double g = node.output.grad()[0] * inv_n;
                               Tensor in = node.inputs[0];
                               auto gx = in.grad_buffer();
                               for (std::size_t i = 0; i < n; ++i) {
                                 const std::size_t t = static_cast<std::size_t>(tgt[i]);
                                 for (std::size_t j = 0; j < c; ++j) {
                                   if (!active[i * c + j]) continue;
                                   gx[i * c + j] += g;
                                   gx[i * c + t] -= g;
                                 }
                               }
                             });
}

Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> targets, std::span<const unsigned char> contributes) {
  if (logits.rank() != 2) fail(ErrorCode::dimension, "loss expects [n x classes] logits, got " + shape_string(logits.shape()));
  const std::size_t n = logits.rows(), c = logits.cols();
  if (!contributes.empty() && contributes.size() != n) fail(ErrorCode::dimension, "mask length does not match logits rows");
  // Rows that do not contribute may carry any placeholder target.
  if (targets.size() != n) {
    fail(ErrorCode::dimension, std::to_string(targets.size()) + " targets for " + shape_string(logits.shape()) + " logits");
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i) {
    if (!contributes.empty() && !contributes[i]) continue;
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= c) {
      fail(ErrorCode::label, "target " + std::to_string(targets[i]) + " outside [0, " + std::to_string(c) + ")");
    }
    rows.push_back(i);
  }
  if (rows.empty()) fail(ErrorCode::empty, "no positions contribute to the cross-entropy loss");

  const auto Y = logits.data();
  std::vector<double> probs(rows.size() * c);
  double total = 0.0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double* y = &Y[rows[r] * c];
    const std::size_t arg = static_cast<std::size_t>(std::max_element(y, y + c) - y);
    const double mx = y[arg];
    // log-sum-exp as mx + log1p(sum of the non-maximal terms) keeps tiny losses exact
    double rest = 0.0;
    for (std::size_t j = 0; j < c; ++j)
      if (j != arg) rest += std::exp(y[j] - mx);
    const double tail = std::log1p(rest);
    for (std::size_t j = 0; j < c; ++j) probs[r * c + j] = std::exp(y[j] - mx - tail);
    total += (mx - y[targets[rows[r]]]) + tail;
  }
  const double inv = 1.0 / static_cast<double>(rows.size());
  std::vector<int> tgt;
  for (auto r : rows) tgt.push_back(targets[r]);
  return detail::make_result(
      {1}, {total * inv}, {logits},
      [c, inv, rows = std::move(rows), probs = std::move(probs), tgt = std::move(tgt)](const TapeNode& node) {
        const double g = node.output.grad()[0] * inv;
        Tensor in = node.inputs[0];
        auto gx = in.grad_buffer();
        for (std::size_t r = 0; r < rows.size(); ++r) {
          for (std::size_t j = 0; j < c; ++j) gx[rows[r] * c + j] += g * probs[r * c + j];
          gx[rows[r] * c + static_cast<std::size_t>(tgt[r])] -= g;
        }
      });
}

}  // namespace unirobust
