#pragma once

#include <cstddef>
#include <vector>

#include "iiht/tensor.hpp"

namespace iiht {

// Elementwise binary ops broadcast numpy-style (shapes aligned from the
// right; extent-1 axes repeat). Incompatible shapes raise DimensionError.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Elementwise max of same-shape tensors; gradient follows the winning
// operand, ties go to `a`.
Tensor emax(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);

// 2-D matrix product [m x k] . [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& a, const Shape& new_shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t end);
inline Tensor row(const Tensor& a, std::size_t i) { return slice(a, 0, i, i + 1); }

// table [V x e], ids in [0, V) -> [ids.size() x e].
Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids);

Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor log(const Tensor& a);
// log(max(x, floor)); gradient is zero in the clamped region.
Tensor log_clamped(const Tensor& a, double floor);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

// Max-subtraction stabilized softmax along `axis`. Inputs must be finite.
Tensor softmax(const Tensor& a, std::size_t axis);

// Normalizes over the last axis to zero mean / unit variance (no affine).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

// Inverted dropout; identity when train_flag is false or rate is zero.
Tensor dropout(const Tensor& a, double rate, bool train_flag, Rng& rng);

// Where mask is nonzero, output = value (gradient blocked); else passes a.
Tensor masked_fill(const Tensor& a, const Tensor& mask, double value);

// Patch extraction for convolution: [C x H x W] -> [C*kh*kw x out_h*out_w]
// with zero padding. Backward scatter-adds into the image.
Tensor im2col(const Tensor& image, std::size_t kh, std::size_t kw,
              std::size_t stride, std::size_t pad);

}  // namespace iiht
