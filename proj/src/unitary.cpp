#include "unirobust/unitary.hpp"

#include <cmath>
#include <sstream>

#include "unirobust/error.hpp"

namespace unirobust {

namespace {

struct Factorization {
  std::vector<double> q;
  std::vector<double> r;
  std::size_t reflections = 0;
};

std::size_t require_square(const Tensor& w, const char* what) {
  if (w.rank() != 2 || w.rows() != w.cols()) {
    fail(ErrorCode::dimension, std::string(what) + " needs a square matrix, got " + shape_string(w.shape()));
  }
  return w.rows();
}

Factorization householder(const Tensor& w) {
  const std::size_t n = require_square(w, "qr_decompose");
  Factorization f;
  f.r.assign(w.data().begin(), w.data().end());
  for (double v : f.r) {
    if (!std::isfinite(v)) fail(ErrorCode::domain, "qr_decompose input has a non-finite entry");
  }
  f.q.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) f.q[i * n + i] = 1.0;
  auto& R = f.r;
  auto& Q = f.q;
  std::vector<double> v(n);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    double norm2 = 0.0;
    for (std::size_t i = k; i < n; ++i) norm2 += R[i * n + k] * R[i * n + k];
    const double norm = std::sqrt(norm2);
    if (norm == 0.0) continue;  // column already zero below and on the diagonal
    const double x0 = R[k * n + k];
    const double alpha = x0 >= 0.0 ? -norm : norm;
    for (std::size_t i = k; i < n; ++i) v[i] = R[i * n + k];
    v[k] -= alpha;
    double vnorm2 = 0.0;
    for (std::size_t i = k; i < n; ++i) vnorm2 += v[i] * v[i];
    if (vnorm2 == 0.0) continue;
    const double beta = 2.0 / vnorm2;
    // R <- H R on rows k..n-1
    for (std::size_t j = k; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = k; i < n; ++i) s += v[i] * R[i * n + j];
      s *= beta;
      for (std::size_t i = k; i < n; ++i) R[i * n + j] -= s * v[i];
    }
    // Q <- Q H on columns k..n-1
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = k; j < n; ++j) s += Q[i * n + j] * v[j];
      s *= beta;
      for (std::size_t j = k; j < n; ++j) Q[i * n + j] -= s * v[j];
    }
    R[k * n + k] = alpha;
    for (std::size_t i = k + 1; i < n; ++i) R[i * n + k] = 0.0;
    ++f.reflections;
  }
  return f;
}

}  // namespace

QRResult qr_decompose(const Tensor& w) {
  const std::size_t n = require_square(w, "qr_decompose");
  auto f = householder(w);
  return {Tensor::from({n, n}, std::move(f.q)), Tensor::from({n, n}, std::move(f.r))};
}

SignMatrix sign_correct(const Tensor& r) {
  const std::size_t n = require_square(r, "sign_correct");
  SignMatrix s;
  s.diag.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.diag[i] = r.at(i, i) >= 0.0 ? 1 : -1;
  return s;
}

Tensor project_unitary(const Tensor& w) {
  const std::size_t n = require_square(w, "project_unitary");
  const auto qr = qr_decompose(w);
  const auto s = sign_correct(qr.r);
  std::vector<double> u(qr.q.data().begin(), qr.q.data().end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) u[i * n + j] *= s.diag[j];
  return Tensor::from({n, n}, std::move(u));
}

namespace {

// Returns max |U^T U - I| and the location of the worst entry.
double gram_residual(const Tensor& u, std::size_t* worst_i, std::size_t* worst_j, double* worst_value) {
  const std::size_t n = require_square(u, "unitarity check");
  const auto U = u.data();
  double worst = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += U[k * n + i] * U[k * n + j];
      const double dev = std::abs(s - (i == j ? 1.0 : 0.0));
      if (dev > worst) {
        worst = dev;
        if (worst_i) {
          *worst_i = i;
          *worst_j = j;
          *worst_value = s;
        }
      }
    }
  }
  return worst;
}

}  // namespace

double unitarity_residual(const Tensor& u) { return gram_residual(u, nullptr, nullptr, nullptr); }

double check_norm_preservation(const Tensor& u, const Tensor& x, const Tensor& x_pert, double tolerance) {
  const std::size_t n = require_square(u, "check_norm_preservation");
  if (x.size() != n || x_pert.size() != n) {
    fail(ErrorCode::dimension, "vectors " + shape_string(x.shape()) + " and " + shape_string(x_pert.shape()) +
                                   " do not match " + shape_string(u.shape()));
  }
  std::size_t wi = 0, wj = 0;
  double wv = 0.0;
  const double residual = gram_residual(u, &wi, &wj, &wv);
  if (residual >= tolerance) {
    std::ostringstream os;
    os << "matrix is not unitary: (U^T U)[" << wi << "][" << wj << "] = " << wv << ", deviation " << residual;
    fail(ErrorCode::contract, os.str());
  }
  const auto U = u.data();
  const auto X = x.data();
  const auto Xp = x_pert.data();
  double in2 = 0.0, out2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = X[i] - Xp[i];
    in2 += d * d;
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += U[i * n + k] * (X[k] - Xp[k]);
    out2 += s * s;
  }
  return std::abs(std::sqrt(out2) - std::sqrt(in2));
}

double determinant(const Tensor& w) {
  const std::size_t n = require_square(w, "determinant");
  const auto f = householder(w);
  double det = f.reflections % 2 == 0 ? 1.0 : -1.0;
  for (std::size_t i = 0; i < n; ++i) det *= f.r[i * n + i];
  return det;
}

}  // namespace unirobust
