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

#include "advloss/ops.hpp"

#include "advloss/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace advloss {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

Shape broadcast_shapes(const Shape& a, const Shape& b)
{
    const std::size_t rank = std::max(a.size(), b.size());
    Shape out(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
        const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
        out[i] = std::max(da, db);
    }
    return out;
}

// Per-axis strides into `in` when it is broadcast to `out` (0 on broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out)
{
    const std::size_t rank = out.size();
    if (in.size() > rank) throw ShapeError("cannot broadcast " + to_string(in) + " to " + to_string(out));
    std::vector<std::size_t> stride(rank, 0);
    std::size_t s = 1;
    for (std::size_t k = in.size(); k-- > 0;) {
        const std::size_t axis = k + (rank - in.size());
        if (in[k] == out[axis])
            stride[axis] = in[k] == 1 ? 0 : s;
        else if (in[k] != 1)
            throw ShapeError("cannot broadcast " + to_string(in) + " to " + to_string(out));
        s *= in[k];
    }
    return stride;
}

// Walks `out` one last-axis row at a time, calling
// row(out_offset, a_offset, b_offset, length, a_step, b_step).
template <typename Row>
void walk_rows(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb, Row row)
{
    const std::size_t rank = out.size();
    if (rank == 0) {
        row(0, 0, 0, 1, 0, 0);
        return;
    }
    const std::size_t len = out[rank - 1];
    const std::size_t total = numel(out);
    if (total == 0) return;
    std::vector<std::size_t> counter(rank, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t o = 0; o < total; o += len) {
        row(o, oa, ob, len, sa[rank - 1], sb[rank - 1]);
        for (std::size_t axis = rank - 1; axis-- > 0;) {
            if (++counter[axis] < out[axis]) {
                oa += sa[axis];
                ob += sb[axis];
                break;
            }
            oa -= sa[axis] * (out[axis] - 1);
            ob -= sb[axis] * (out[axis] - 1);
            counter[axis] = 0;
        }
    }
}

template <typename F>
Tensor map_unary(const Tensor& x, F f)
{
    Tensor out(x.shape());
    const double* src = x.raw();
    double* dst = out.raw();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(src[i]);
    return out;
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f)
{
    if (a.shape() == b.shape()) {
        Tensor out(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
        return out;
    }
    const Shape shape = broadcast_shapes(a.shape(), b.shape());
    Tensor out(shape);
    if (b.size() == 1) {
        const double bv = b[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i], bv);
        return out;
    }
    if (a.size() == 1) {
        const double av = a[0];
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av, b[i]);
        return out;
    }
    const double* pa = a.raw();
    const double* pb = b.raw();
    double* po = out.raw();
    walk_rows(shape, broadcast_strides(a.shape(), shape), broadcast_strides(b.shape(), shape),
              [&](std::size_t o, std::size_t ia, std::size_t ib, std::size_t n, std::size_t da, std::size_t db) {
                  for (std::size_t j = 0; j < n; ++j) po[o + j] = f(pa[ia + j * da], pb[ib + j * db]);
              });
    return out;
}

Tensor sum_to_kernel(const Tensor& x, const Shape& shape)
{
    Tensor out(shape, 0.0);
    if (out.size() == 1) {
        double acc = 0.0;
        for (double v : x.data()) acc += v;
        out[0] = acc;
        return out;
    }
    const double* px = x.raw();
    double* po = out.raw();
    const std::vector<std::size_t> none(x.rank(), 0);
    walk_rows(x.shape(), broadcast_strides(shape, x.shape()), none,
              [&](std::size_t o, std::size_t io, std::size_t, std::size_t n, std::size_t d, std::size_t) {
                  for (std::size_t j = 0; j < n; ++j) po[io + j * d] += px[o + j];
              });
    return out;
}

Tensor broadcast_kernel(const Tensor& x, const Shape& shape)
{
    if (x.size() == 1) return Tensor(shape, x[0]);
    Tensor out(shape);
    const double* px = x.raw();
    double* po = out.raw();
    const std::vector<std::size_t> none(shape.size(), 0);
    walk_rows(shape, broadcast_strides(x.shape(), shape), none,
              [&](std::size_t o, std::size_t ix, std::size_t, std::size_t n, std::size_t d, std::size_t) {
                  for (std::size_t j = 0; j < n; ++j) po[o + j] = px[ix + j * d];
              });
    return out;
}

// Reduces a broadcast gradient back to the operand's shape.
Var reduce_like(const Var& g, const Shape& shape)
{
    if (g.shape() == shape) return g;
    return sum_to(g, shape);
}

double stable_softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }
double stable_sigmoid(double v)
{
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

std::size_t axis_outer(const Shape& s, std::size_t axis)
{
    std::size_t n = 1;
    for (std::size_t i = 0; i < axis; ++i) n *= s[i];
    return n;
}

std::size_t axis_inner(const Shape& s, std::size_t axis)
{
    std::size_t n = 1;
    for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
    return n;
}

} // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b)
{
    Tensor v = map_binary(a.value(), b.value(), [](double x, double y) { return x + y; });
    return record(std::move(v), {a, b},
                  [](const Var& self, const Var& g, const std::vector<char>& need) -> std::vector<Var> {
                      const auto& in = self.node()->inputs;
                      return {need[0] ? reduce_like(g, in[0].shape()) : Var{},
                              need[1] ? reduce_like(g, in[1].shape()) : Var{}};
                  },
                  "add");
}

Var sub(const Var& a, const Var& b)
{
    Tensor v = map_binary(a.value(), b.value(), [](double x, double y) { return x - y; });
    return record(std::move(v), {a, b},
                  [](const Var& self, const Var& g, const std::vector<char>& need) -> std::vector<Var> {
                      const auto& in = self.node()->inputs;
                      return {need[0] ? reduce_like(g, in[0].shape()) : Var{},
                              need[1] ? reduce_like(neg(g), in[1].shape()) : Var{}};
                  },
                  "sub");
}

Var mul(const Var& a, const Var& b)
{
    Tensor v = map_binary(a.value(), b.value(), [](double x, double y) { return x * y; });
    return record(std::move(v), {a, b},
                  [](const Var& self, const Var& g, const std::vector<char>& need) -> std::vector<Var> {
                      const auto& in = self.node()->inputs;
                      return {need[0] ? reduce_like(mul(g, in[1]), in[0].shape()) : Var{},
                              need[1] ? reduce_like(mul(g, in[0]), in[1].shape()) : Var{}};
                  },
                  "mul");
}

Var div(const Var& a, const Var& b)
{
    Tensor v = map_binary(a.value(), b.value(), [](double x, double y) { return x / y; });
    return record(std::move(v), {a, b},
                  [](const Var& self, const Var& g, const std::vector<char>& need) -> std::vector<Var> {
                      const auto& in = self.node()->inputs;
                      Var ga, gb;
                      if (need[0]) ga = reduce_like(div(g, in[1]), in[0].shape());
                      if (need[1]) gb = reduce_like(neg(div(mul(g, self), in[1])), in[1].shape());
                      return {ga, gb};
                  },
                  "div");
}

Var neg(const Var& x) { return scale(x, -1.0); }

Var scale(const Var& x, double factor)
{
    Tensor v = map_unary(x.value(), [factor](double t) { return t * factor; });
    return record(std::move(v), {x},
                  [factor](const Var&, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {scale(g, factor)};
                  },
                  "scale");
}

Var add_scalar(const Var& x, double offset)
{
    Tensor v = map_unary(x.value(), [offset](double t) { return t + offset; });
    return record(std::move(v), {x},
                  [](const Var&, const Var& g, const std::vector<char>&) -> std::vector<Var> { return {g}; },
                  "add_scalar");
}

Var square(const Var& x) { return mul(x, x); }

Var pow(const Var& x, double exponent)
{
    Tensor v = map_unary(x.value(), [exponent](double t) { return std::pow(t, exponent); });
    return record(std::move(v), {x},
                  [exponent](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      const Var& in = self.node()->inputs[0];
                      return {mul(g, scale(pow(in, exponent - 1.0), exponent))};
                  },
                  "pow");
}

Var exp(const Var& x)
{
    Tensor v = map_unary(x.value(), [](double t) { return std::exp(t); });
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {mul(g, self)};
                  },
                  "exp");
}

Var log(const Var& x)
{
    Tensor v = map_unary(x.value(), [](double t) { return std::log(t); });
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {div(g, self.node()->inputs[0])};
                  },
                  "log");
}

Var mul_const(const Var& x, const Tensor& c)
{
    if (x.shape() != c.shape()) throw ShapeError("mul_const shape mismatch");
    Tensor v = map_binary(x.value(), c, [](double a, double b) { return a * b; });
    return record(std::move(v), {x},
                  [c](const Var&, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {mul_const(g, c)};
                  },
                  "mul_const");
}

Var relu(const Var& x)
{
    Tensor v = map_unary(x.value(), [](double t) { return t > 0.0 ? t : 0.0; });
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      Tensor mask = map_unary(self.node()->inputs[0].value(),
                                              [](double t) { return t > 0.0 ? 1.0 : 0.0; });
                      return {mul_const(g, mask)};
                  },
                  "relu");
}

Var abs(const Var& x)
{
    Tensor v = map_unary(x.value(), [](double t) { return std::fabs(t); });
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      Tensor sign = map_unary(self.node()->inputs[0].value(),
                                              [](double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); });
                      return {mul_const(g, sign)};
                  },
                  "abs");
}

Var softplus(const Var& x)
{
    Tensor v = map_unary(x.value(), stable_softplus);
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {mul(g, sigmoid(self.node()->inputs[0]))};
                  },
                  "softplus");
}

Var sigmoid(const Var& x)
{
    Tensor v = map_unary(x.value(), stable_sigmoid);
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {mul(g, mul(self, add_scalar(neg(self), 1.0)))};
                  },
                  "sigmoid");
}

Var sqrt(const Var& x)
{
    Tensor v = map_unary(x.value(), [](double t) { return std::sqrt(t); });
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {mul(g, scale(safe_reciprocal(self), 0.5))};
                  },
                  "sqrt");
}

Var safe_reciprocal(const Var& x)
{
    Tensor v = map_unary(x.value(), [](double t) { return t == 0.0 ? 0.0 : 1.0 / t; });
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {neg(mul(g, square(self)))};
                  },
                  "safe_reciprocal");
}

// ---------------------------------------------------------------- shape ops

Var sum(const Var& x) { return sum_to(x, Shape{}); }

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Var sum_to(const Var& x, const Shape& shape)
{
    if (x.shape() == shape) return x;
    Tensor v = sum_to_kernel(x.value(), shape);
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {broadcast_to(g, self.node()->inputs[0].shape())};
                  },
                  "sum_to");
}

Var broadcast_to(const Var& x, const Shape& shape)
{
    if (x.shape() == shape) return x;
    Tensor v = broadcast_kernel(x.value(), shape);
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {sum_to(g, self.node()->inputs[0].shape())};
                  },
                  "broadcast_to");
}

Var reshape(const Var& x, const Shape& shape)
{
    if (x.shape() == shape) return x;
    Tensor v = x.value().reshaped(shape);
    return record(std::move(v), {x},
                  [](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {reshape(g, self.node()->inputs[0].shape())};
                  },
                  "reshape");
}

// ---------------------------------------------------------------- matmul

Var matmul(const Var& a, const Var& b, bool ta, bool tb)
{
    if (a.value().rank() != 2 || b.value().rank() != 2) throw ShapeError("matmul needs rank-2 operands");
    if (ta && tb) throw ShapeError("matmul with both operands transposed is not supported");
    const std::size_t m = ta ? a.shape()[1] : a.shape()[0];
    const std::size_t k = ta ? a.shape()[0] : a.shape()[1];
    const std::size_t kb = tb ? b.shape()[1] : b.shape()[0];
    const std::size_t n = tb ? b.shape()[0] : b.shape()[1];
    if (k != kb)
        throw ShapeError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));

    Tensor out(Shape{m, n});
    ConstMap A(a.value().raw(), a.shape()[0], a.shape()[1]);
    ConstMap B(b.value().raw(), b.shape()[0], b.shape()[1]);
    MutMap C(out.raw(), m, n);
    if (ta)
        C.noalias() = A.transpose() * B;
    else if (tb)
        C.noalias() = A * B.transpose();
    else
        C.noalias() = A * B;

    return record(std::move(out), {a, b},
                  [ta, tb](const Var& self, const Var& g, const std::vector<char>& need) -> std::vector<Var> {
                      const Var& A = self.node()->inputs[0];
                      const Var& B = self.node()->inputs[1];
                      Var ga, gb;
                      if (ta) {
                          if (need[0]) ga = matmul(B, g, false, true);
                          if (need[1]) gb = matmul(A, g, false, false);
                      } else if (tb) {
                          if (need[0]) ga = matmul(g, B, false, false);
                          if (need[1]) gb = matmul(g, A, true, false);
                      } else {
                          if (need[0]) ga = matmul(g, B, false, true);
                          if (need[1]) gb = matmul(A, g, true, false);
                      }
                      return {ga, gb};
                  },
                  "matmul");
}

// ---------------------------------------------------------------- convolution

ConvGeometry ConvGeometry::make(const Shape& input, std::size_t kernel_h, std::size_t kernel_w,
                                std::size_t stride, Padding padding)
{
    if (input.size() != 4) throw ShapeError("convolution input must be NHWC, got " + to_string(input));
    if (stride == 0 || kernel_h == 0 || kernel_w == 0) throw ShapeError("kernel and stride must be positive");
    ConvGeometry g{};
    g.batch = input[0];
    g.height = input[1];
    g.width = input[2];
    g.channels = input[3];
    g.kernel_h = kernel_h;
    g.kernel_w = kernel_w;
    g.stride = stride;
    if (padding == Padding::Valid) {
        if (g.height < kernel_h || g.width < kernel_w) throw ShapeError("kernel larger than input");
        g.out_h = (g.height - kernel_h) / stride + 1;
        g.out_w = (g.width - kernel_w) / stride + 1;
        g.pad_top = g.pad_left = 0;
    } else {
        g.out_h = (g.height + stride - 1) / stride;
        g.out_w = (g.width + stride - 1) / stride;
        const std::size_t need_h = (g.out_h - 1) * stride + kernel_h;
        const std::size_t need_w = (g.out_w - 1) * stride + kernel_w;
        g.pad_top = need_h > g.height ? (need_h - g.height) / 2 : 0;
        g.pad_left = need_w > g.width ? (need_w - g.width) / 2 : 0;
    }
    return g;
}

namespace {

// Calls visit(col_index, input_index) for every in-bounds patch entry.
template <typename Visit>
void for_each_patch(const ConvGeometry& g, Visit visit)
{
    const std::size_t patch = g.kernel_h * g.kernel_w * g.channels;
    std::size_t row = 0;
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox, ++row) {
                const std::size_t base = row * patch;
                for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad_top);
                    if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
                    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad_left);
                        if (ix < 0 || ix >= static_cast<long>(g.width)) continue;
                        const std::size_t in = ((n * g.height + iy) * g.width + ix) * g.channels;
                        const std::size_t col = base + (ky * g.kernel_w + kx) * g.channels;
                        visit(col, in, g.channels);
                    }
                }
            }
}

} // namespace

Var im2col(const Var& x, const ConvGeometry& geometry)
{
    if (x.shape() != geometry.input_shape())
        throw ShapeError("im2col input " + to_string(x.shape()) + " does not match geometry");
    Tensor cols(geometry.cols_shape(), 0.0);
    const double* src = x.value().raw();
    double* dst = cols.raw();
    for_each_patch(geometry, [&](std::size_t col, std::size_t in, std::size_t c) {
        std::copy(src + in, src + in + c, dst + col);
    });
    return record(std::move(cols), {x},
                  [geometry](const Var&, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {col2im(g, geometry)};
                  },
                  "im2col");
}

Var col2im(const Var& cols, const ConvGeometry& geometry)
{
    if (cols.shape() != geometry.cols_shape())
        throw ShapeError("col2im input " + to_string(cols.shape()) + " does not match geometry");
    Tensor image(geometry.input_shape(), 0.0);
    const double* src = cols.value().raw();
    double* dst = image.raw();
    for_each_patch(geometry, [&](std::size_t col, std::size_t in, std::size_t c) {
        for (std::size_t i = 0; i < c; ++i) dst[in + i] += src[col + i];
    });
    return record(std::move(image), {cols},
                  [geometry](const Var&, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {im2col(g, geometry)};
                  },
                  "col2im");
}

Var conv2d(const Var& x, const Var& kernel, const Var& bias, std::size_t kernel_h, std::size_t kernel_w,
           std::size_t stride, Padding padding)
{
    const ConvGeometry g = ConvGeometry::make(x.shape(), kernel_h, kernel_w, stride, padding);
    if (kernel.value().rank() != 2 || kernel.shape()[0] != kernel_h * kernel_w * g.channels)
        throw ShapeError("kernel shape " + to_string(kernel.shape()) + " does not match input " +
                         to_string(x.shape()));
    const std::size_t filters = kernel.shape()[1];
    Var out = matmul(im2col(x, g), kernel);
    if (bias.defined()) out = add(out, bias);
    return reshape(out, {g.batch, g.out_h, g.out_w, filters});
}

// ---------------------------------------------------------------- gather / pool

Var gather(const Var& x, IndexMap index, const Shape& out_shape)
{
    if (index->size() != numel(out_shape)) throw ShapeError("gather index length mismatch");
    Tensor out(out_shape);
    const double* src = x.value().raw();
    for (std::size_t j = 0; j < index->size(); ++j) out[j] = src[(*index)[j]];
    return record(std::move(out), {x},
                  [index](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {scatter_add(g, index, self.node()->inputs[0].shape())};
                  },
                  "gather");
}

Var scatter_add(const Var& x, IndexMap index, const Shape& out_shape)
{
    if (index->size() != x.size()) throw ShapeError("scatter index length mismatch");
    Tensor out(out_shape, 0.0);
    const double* src = x.value().raw();
    for (std::size_t j = 0; j < index->size(); ++j) out[(*index)[j]] += src[j];
    return record(std::move(out), {x},
                  [index](const Var& self, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {gather(g, index, self.node()->inputs[0].shape())};
                  },
                  "scatter_add");
}

Var maxpool2d(const Var& x, std::size_t size, std::size_t stride)
{
    const ConvGeometry g = ConvGeometry::make(x.shape(), size, size, stride, Padding::Valid);
    const Shape out_shape{g.batch, g.out_h, g.out_w, g.channels};
    auto index = std::make_shared<std::vector<std::size_t>>(numel(out_shape));
    const double* src = x.value().raw();
    std::size_t j = 0;
    for (std::size_t n = 0; n < g.batch; ++n)
        for (std::size_t oy = 0; oy < g.out_h; ++oy)
            for (std::size_t ox = 0; ox < g.out_w; ++ox)
                for (std::size_t c = 0; c < g.channels; ++c, ++j) {
                    std::size_t best = 0;
                    double best_value = 0.0;
                    bool first = true;
                    for (std::size_t ky = 0; ky < size; ++ky)
                        for (std::size_t kx = 0; kx < size; ++kx) {
                            const std::size_t at =
                                ((n * g.height + oy * stride + ky) * g.width + ox * stride + kx) * g.channels + c;
                            if (first || src[at] > best_value) {
                                best = at;
                                best_value = src[at];
                                first = false;
                            }
                        }
                    (*index)[j] = best;
                }
    return gather(x, std::move(index), out_shape);
}

// ---------------------------------------------------------------- concat / slice

Var concat(const std::vector<Var>& parts, std::size_t axis)
{
    if (parts.empty()) throw ShapeError("concat of nothing");
    Shape shape = parts[0].shape();
    if (axis >= shape.size()) throw ShapeError("concat axis out of range");
    std::size_t total = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        if (s.size() != shape.size()) throw ShapeError("concat rank mismatch");
        for (std::size_t i = 0; i < s.size(); ++i)
            if (i != axis && s[i] != shape[i])
                throw ShapeError("concat shape mismatch: " + to_string(s) + " vs " + to_string(shape));
        total += s[axis];
    }
    shape[axis] = total;
    Tensor out(shape);
    const std::size_t outer = axis_outer(shape, axis);
    const std::size_t inner = axis_inner(shape, axis);
    std::vector<std::size_t> offsets;
    std::size_t at = 0;
    for (const auto& p : parts) {
        offsets.push_back(at);
        const std::size_t len = p.shape()[axis];
        const double* src = p.value().raw();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy(src + o * len * inner, src + (o + 1) * len * inner, out.raw() + (o * total + at) * inner);
        at += len;
    }
    return record(std::move(out), parts,
                  [axis, offsets](const Var& self, const Var& g, const std::vector<char>& need) -> std::vector<Var> {
                      const auto& in = self.node()->inputs;
                      std::vector<Var> grads(in.size());
                      for (std::size_t i = 0; i < in.size(); ++i)
                          if (need[i]) grads[i] = slice(g, axis, offsets[i], offsets[i] + in[i].shape()[axis]);
                      return grads;
                  },
                  "concat");
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end)
{
    const Shape& in = x.shape();
    if (axis >= in.size() || begin > end || end > in[axis]) throw ShapeError("slice out of range");
    Shape shape = in;
    shape[axis] = end - begin;
    Tensor out(shape);
    const std::size_t outer = axis_outer(in, axis);
    const std::size_t inner = axis_inner(in, axis);
    const std::size_t len = end - begin;
    const double* src = x.value().raw();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy(src + (o * in[axis] + begin) * inner, src + (o * in[axis] + end) * inner,
                  out.raw() + o * len * inner);
    const std::size_t full = in[axis];
    return record(std::move(out), {x},
                  [axis, begin, full](const Var&, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {pad_slice(g, axis, begin, full)};
                  },
                  "slice");
}

Var pad_slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t full)
{
    const Shape& in = x.shape();
    if (axis >= in.size() || begin + in[axis] > full) throw ShapeError("pad_slice out of range");
    Shape shape = in;
    shape[axis] = full;
    Tensor out(shape, 0.0);
    const std::size_t outer = axis_outer(in, axis);
    const std::size_t inner = axis_inner(in, axis);
    const std::size_t len = in[axis];
    const double* src = x.value().raw();
    for (std::size_t o = 0; o < outer; ++o)
        std::copy(src + o * len * inner, src + (o + 1) * len * inner, out.raw() + (o * full + begin) * inner);
    return record(std::move(out), {x},
                  [axis, begin, len](const Var&, const Var& g, const std::vector<char>&) -> std::vector<Var> {
                      return {slice(g, axis, begin, begin + len)};
                  },
                  "pad_slice");
}

// ---------------------------------------------------------------- composites

Var softmax(const Var& x)
{
    const Shape& s = x.shape();
    if (s.empty()) throw ShapeError("softmax of a scalar");
    Shape row_shape = s;
    row_shape.back() = 1;
    // Subtracting the row maximum leaves softmax unchanged, so it enters
    // as a constant.
    const std::size_t cols = s.back();
    Tensor row_max(row_shape);
    for (std::size_t r = 0; r < row_max.size(); ++r) {
        const double* row = x.value().raw() + r * cols;
        row_max[r] = *std::max_element(row, row + cols);
    }
    Var e = exp(sub(x, constant(std::move(row_max))));
    return div(e, sum_to(e, row_shape));
}

Var dense(const Var& x, const Var& weight, const Var& bias)
{
    Var out = matmul(x, weight);
    return bias.defined() ? add(out, bias) : out;
}

Var layer_norm(const Var& x, const Var& gain, const Var& shift, double epsilon)
{
    const Shape shape = x.shape();
    if (shape.size() < 2) throw ShapeError("layer_norm needs a batch axis");
    const std::size_t n = shape[0];
    const std::size_t m = x.size() / n;
    Var flat = reshape(x, {n, m});
    Var mu = scale(sum_to(flat, {n, 1}), 1.0 / static_cast<double>(m));
    Var centered = sub(flat, mu);
    Var var = scale(sum_to(square(centered), {n, 1}), 1.0 / static_cast<double>(m));
    Var normalized = reshape(mul(centered, pow(add_scalar(var, epsilon), -0.5)), shape);
    return add(mul(normalized, gain), shift);
}

BatchNormResult batch_norm_train(const Var& x, const Var& gain, const Var& shift, double epsilon)
{
    const Shape shape = x.shape();
    const std::size_t c = shape.back();
    const std::size_t rows = x.size() / c;
    Var flat = reshape(x, {rows, c});
    Var mu = scale(sum_to(flat, {1, c}), 1.0 / static_cast<double>(rows));
    Var centered = sub(flat, mu);
    Var var = scale(sum_to(square(centered), {1, c}), 1.0 / static_cast<double>(rows));
    Var normalized = reshape(mul(centered, pow(add_scalar(var, epsilon), -0.5)), shape);
    return {add(mul(normalized, gain), shift), mu.value().reshaped({c}), var.value().reshaped({c})};
}

Var batch_norm_eval(const Var& x, const Var& gain, const Var& shift, const Tensor& mean, const Tensor& var,
                    double epsilon)
{
    Tensor inv(var.shape());
    for (std::size_t i = 0; i < var.size(); ++i) inv[i] = 1.0 / std::sqrt(var[i] + epsilon);
    Var normalized = mul(sub(x, constant(mean)), constant(std::move(inv)));
    return add(mul(normalized, gain), shift);
}

Var l2_norm(const Var& x)
{
    const std::size_t n = x.shape().at(0);
    Var flat = reshape(x, {n, x.size() / n});
    return reshape(sqrt(sum_to(square(flat), {n, 1})), {n});
}

} // namespace advloss
