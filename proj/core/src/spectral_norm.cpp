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

#include "advloss/spectral_norm.hpp"

#include "advloss/errors.hpp"
#include "advloss/ops.hpp"

#include <cmath>

namespace advloss {

namespace {

double normalize(std::vector<double>& v)
{
    double n = 0.0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0.0)
        for (double& x : v) x /= n;
    return n;
}

void check_matrix(const Tensor& w, const PowerIteration& state)
{
    if (w.rank() != 2) throw ShapeError("spectral normalization needs a matrix, got " + to_string(w.shape()));
    if (state.u.size() != w.dim(1)) throw ShapeError("power-iteration state length does not match weight columns");
}

// Power steps; returns v (length rows) and updates u. With zero
// iterations v = W u / |W u| and u is left as is. An empty result means
// the matrix annihilated u.
std::vector<double> iterate(const Tensor& w, std::vector<double>& u, int iterations)
{
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    std::vector<double> v(rows), next_u(u);
    if (iterations <= 0) {
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * u[c];
            v[r] = acc;
        }
        if (normalize(v) == 0.0) return {};
        return v;
    }
    for (int it = 0; it < iterations; ++it) {
        for (std::size_t r = 0; r < rows; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * next_u[c];
            v[r] = acc;
        }
        if (normalize(v) == 0.0) return {};
        std::fill(next_u.begin(), next_u.end(), 0.0);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) next_u[c] += w[r * cols + c] * v[r];
        if (normalize(next_u) == 0.0) return {};
    }
    u = std::move(next_u);
    return v;
}

double bilinear(const Tensor& w, const std::vector<double>& v, const std::vector<double>& u)
{
    const std::size_t rows = w.dim(0), cols = w.dim(1);
    double sigma = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += w[r * cols + c] * u[c];
        sigma += v[r] * acc;
    }
    return sigma;
}

} // namespace

PowerIteration PowerIteration::for_columns(std::size_t cols)
{
    PowerIteration state;
    state.u.resize(cols);
    for (std::size_t i = 0; i < cols; ++i) state.u[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i) + 1.0);
    normalize(state.u);
    return state;
}

double power_iterate(const Tensor& weight, PowerIteration& state, int iterations)
{
    check_matrix(weight, state);
    const auto v = iterate(weight, state.u, iterations);
    return v.empty() ? 0.0 : bilinear(weight, v, state.u);
}

Tensor spectral_normalize(const Tensor& weight, PowerIteration& state, int iterations)
{
    const double sigma = power_iterate(weight, state, iterations);
    Tensor out(weight.shape(), 0.0);
    if (sigma == 0.0) return out;
    for (std::size_t i = 0; i < weight.size(); ++i) out[i] = weight[i] / sigma;
    return out;
}

Var spectral_normalize(const Var& weight, PowerIteration& state, int iterations)
{
    check_matrix(weight.value(), state);
    const auto v = iterate(weight.value(), state.u, iterations);
    if (v.empty()) return constant(Tensor(weight.shape(), 0.0));
    // sigma = v' W u = sum(W .* (v u'))
    Tensor outer(weight.shape());
    const std::size_t rows = weight.shape()[0], cols = weight.shape()[1];
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) outer[r * cols + c] = v[r] * state.u[c];
    Var sigma = sum(mul_const(weight, outer));
    return div(weight, sigma);
}

} // namespace advloss
