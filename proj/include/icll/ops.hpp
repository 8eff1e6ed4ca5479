#pragma once

#include "icll/tensor.hpp"

#include <vector>

namespace icll {

// Differentiable ops as free functions. Each op runs eagerly; when any input
// is attached to a Graph the result is recorded there with a backward
// closure. Elementwise binary ops broadcast a scalar operand, or an operand
// whose shape is a suffix of the other's (broadcast over leading axes).

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// a [..., k] times b [k, m] -> [..., m]; leading axes of `a` are batch rows.
Tensor matmul(const Tensor& a, const Tensor& b);
/// 2-D transpose.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Concatenate along `axis`; all other extents must agree.
Tensor concat(const std::vector<Tensor>& parts, Index axis);
/// Half-open range [start, stop) along `axis`.
Tensor slice(const Tensor& a, Index axis, Index start, Index stop);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);

/// Softmax over the last axis, computed with max subtraction.
Tensor softmax(const Tensor& a);
/// Normalization over the last axis (pre-affine): (x - mean) / sqrt(var + eps).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

/// Mean over all elements of (pred - target)^2.
Tensor mse_loss(const Tensor& pred, const Tensor& target);
/// Softmax cross-entropy against target probabilities (rows of the last
/// axis); mean over rows. Targets are expected to sum to 1 per row.
Tensor cross_entropy_loss(const Tensor& logits, const Tensor& targets);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// x [..., in] -> x W + b.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

/// Stack 1-D tensors [d] into a [n, d] matrix.
Tensor stack_rows(const std::vector<Tensor>& rows);

/// Copy of `m` with row `row` replaced by `value` ([d]).
Tensor set_row(const Tensor& m, Index row, const Tensor& value);

}  // namespace icll
