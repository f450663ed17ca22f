#pragma once

#include <optional>
#include <span>
#include <vector>

#include "unirobust/tensor.hpp"

namespace unirobust {

struct MarginLossConfig {
  double epsilon = 100.0;
  void validate() const;
};

// (1/n) sum_i sum_{j != t_i} max(y_ij + epsilon - y_i,t_i, 0) over logits [n x n_c].
// The j = t_i term is left out of the sum: it would only add the constant
// epsilon. Subgradient 0 at the hinge kink.
Tensor multi_margin_loss(const Tensor& logits, std::span<const int> targets, double epsilon);

// Mean -log softmax(y_i)[t_i]. When `contributes` is given only rows with a
// nonzero flag count (masked-LM positions); zero contributing rows is an
// empty-batch error.
Tensor cross_entropy_loss(const Tensor& logits, std::span<const int> targets,
                          std::span<const unsigned char> contributes = {});

}  // namespace unirobust
