// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "advloss/autodiff.hpp"

#include <cstddef>
#include <memory>
#include <vector>

namespace advloss {

// Elementwise arithmetic follows right-aligned (numpy-style) broadcasting.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var neg(const Var& x);
Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double offset);
Var square(const Var& x);
Var pow(const Var& x, double exponent);
Var exp(const Var& x);
Var log(const Var& x);
Var relu(const Var& x);
Var abs(const Var& x);
/// log(1 + e^x), evaluated without overflow.
Var softplus(const Var& x);
Var sigmoid(const Var& x);
/// Square root whose derivative is taken as 0 at 0.
Var sqrt(const Var& x);
/// 1/x with 1/0 taken as 0.
Var safe_reciprocal(const Var& x);
/// Product with a constant tensor of the same shape.
Var mul_const(const Var& x, const Tensor& c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scale(a, s); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }
inline Var operator+(const Var& a, double s) { return add_scalar(a, s); }
inline Var operator-(const Var& a, double s) { return add_scalar(a, -s); }

/// Sum over every element, giving a rank-0 result.
Var sum(const Var& x);
Var mean(const Var& x);
/// Sums `x` down to `shape`, which must broadcast to x's shape.
Var sum_to(const Var& x, const Shape& shape);
Var broadcast_to(const Var& x, const Shape& shape);
Var reshape(const Var& x, const Shape& shape);

/// Two-dimensional product op(a) * op(b); at most one operand transposed.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);

enum class Padding { Valid, Same };

/// Geometry of a 2-D convolution over NHWC input. "Same" padding splits
/// the total padding with the extra row/column at the bottom/right.
struct ConvGeometry {
    std::size_t batch, height, width, channels;
    std::size_t kernel_h, kernel_w, stride;
    std::size_t out_h, out_w, pad_top, pad_left;

    static ConvGeometry make(const Shape& input, std::size_t kernel_h, std::size_t kernel_w, std::size_t stride,
                             Padding padding);
    Shape input_shape() const { return {batch, height, width, channels}; }
    Shape cols_shape() const { return {batch * out_h * out_w, kernel_h * kernel_w * channels}; }
};

/// Patch extraction: (N, H, W, C) -> (N*OH*OW, KH*KW*C), patch order (ky, kx, c).
Var im2col(const Var& x, const ConvGeometry& geometry);
/// Adjoint of im2col (overlapping patches are summed).
Var col2im(const Var& cols, const ConvGeometry& geometry);

/// NHWC convolution. `kernel` has shape (KH*KW*C, F), rows ordered as in
/// im2col; `bias` has shape (F) or is undefined.
Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::size_t kernel_h, std::size_t kernel_w,
           std::size_t stride, Padding padding);

using IndexMap = std::shared_ptr<const std::vector<std::size_t>>;

/// out[j] = x[index[j]].
Var gather(const Var& x, IndexMap index, const Shape& out_shape);
/// out[index[j]] += x[j] over a zero tensor of `out_shape`.
Var scatter_add(const Var& x, IndexMap index, const Shape& out_shape);

/// Max pooling over NHWC with valid padding. Ties go to the first maximal
/// element in row-major window order.
Var maxpool2d(const Var& x, std::size_t size, std::size_t stride);

Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Embeds x at [begin, begin + x.dim(axis)) of a zero tensor whose extent
/// along `axis` is `full`.
Var pad_slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t full);

/// Softmax along the last axis.
Var softmax(const Var& x);
Var dense(const Var& x, const Var& weight, const Var& bias);

/// Per-sample normalization over all non-batch axes, then a per-channel
/// (last axis) affine map.
Var layer_norm(const Var& x, const Var& gain, const Var& shift, double epsilon = 1e-5);

struct BatchNormResult {
    Var output;
    Tensor batch_mean; // per channel
    Tensor batch_var;  // per channel, biased
};

/// Normalizes each channel (last axis) with statistics over all other
/// axes of the batch.
BatchNormResult batch_norm_train(const Var& x, const Var& gain, const Var& shift, double epsilon = 1e-5);
/// Normalizes with fixed statistics.
Var batch_norm_eval(const Var& x, const Var& gain, const Var& shift, const Tensor& mean, const Tensor& var,
                    double epsilon = 1e-5);

/// Euclidean norm of each row of a (N, ...) tensor, shape (N).
Var l2_norm(const Var& x);

} // namespace advloss
