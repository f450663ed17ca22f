#pragma once

// Orthogonal ("unitary" over the reals) projection of square weight matrices.
//
// W = Q R by Householder reflections, S = diag(sign(diag(R))) with sign(0) = +1,
// and the projected weight U = Q S. The sign fix makes U the Q factor of the
// positive-diagonal QR of W whenever W is nonsingular.

#include <cstddef>
#include <vector>

#include "unirobust/tensor.hpp"

namespace unirobust {

struct QRResult {
  Tensor q;  // n x n, orthogonal
  Tensor r;  // n x n, upper triangular
};

struct SignMatrix {
  std::vector<int> diag;  // entries are exactly +1 or -1
};

QRResult qr_decompose(const Tensor& w);
SignMatrix sign_correct(const Tensor& r);
Tensor project_unitary(const Tensor& w);

// max |(U^T U - I)_ij|.
double unitarity_residual(const Tensor& u);

// | ||U x - U x'|| - ||x - x'|| |. Throws a contract error naming the worst
// entry of U^T U - I when U is not orthogonal to within `tolerance`.
double check_norm_preservation(const Tensor& u, const Tensor& x, const Tensor& x_pert, double tolerance = 1e-9);

// Determinant from the QR factors: prod(diag R) times the reflection parity.
double determinant(const Tensor& w);

}  // namespace unirobust
