#pragma once

// Shared test helpers: random tensors, central finite differences, a
// transparent bag-of-words victim.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "unirobust/attacks.hpp"
#include "unirobust/tensor.hpp"

namespace testing_support {

using unirobust::Tensor;

inline Tensor random_tensor(unirobust::Shape shape, std::mt19937_64& rng, double scale = 1.0, bool grad = false) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> data(unirobust::shape_size(shape));
  for (auto& v : data) v = n(rng);
  return Tensor::from(std::move(shape), std::move(data), grad);
}

// Central differences of a scalar function with respect to every entry of `x`.
inline std::vector<double> numeric_gradient(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
  std::vector<double> g(x.size());
  auto w = x.mutable_data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double keep = w[i];
    w[i] = keep + h;
    const double up = f();
    w[i] = keep - h;
    const double down = f();
    w[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Score of class 1 minus class 0 is the sum of word weights; the sentence
// representation is the per-word weight histogram so cosine is well defined.
class BowVictim : public unirobust::Victim {
 public:
  explicit BowVictim(std::map<std::string, double> weights, double bias = 0.0)
      : weights_(std::move(weights)), bias_(bias) {}

  unirobust::VictimOutput query(const std::vector<std::string>& words) const override {
    double s = bias_;
    std::vector<double> rep{1.0, 0.0, 0.0};
    for (const auto& w : words) {
      const auto it = weights_.find(w);
      const double v = it == weights_.end() ? 0.0 : it->second;
      s += v;
      rep[v > 0 ? 1 : 2] += std::abs(v);
    }
    ++calls;
    return {{0.0, s}, rep};
  }

  mutable std::size_t calls = 0;

 private:
  std::map<std::string, double> weights_;
  double bias_;
};

// Predicts class 0 regardless of input.
class ConstantVictim : public unirobust::Victim {
 public:
  unirobust::VictimOutput query(const std::vector<std::string>&) const override { return {{1.0, 0.0}, {1.0, 1.0}}; }
};

}  // namespace testing_support
