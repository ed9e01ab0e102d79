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

#include <vector>

namespace advloss {

/// Persistent power-iteration vector for one weight matrix. For a weight
/// of shape (rows, cols) it is a unit vector of length cols.
struct PowerIteration {
    std::vector<double> u;

    /// Deterministic start vector (normalized all-ones with alternating
    /// perturbation) so no RNG is needed.
    static PowerIteration for_columns(std::size_t cols);
};

/// Estimate of the largest singular value after `iterations` power steps,
/// advancing `state`. Zero iterations reuse the stored state unchanged.
/// Returns 0 for a zero matrix and leaves state alone.
double power_iterate(const Tensor& weight, PowerIteration& state, int iterations);

/// weight / sigma_hat. Convolution kernels stored as (KH*KW*C, F) are
/// treated as the transpose of the (F, KH*KW*C) matrix; both have the
/// same singular values.
Tensor spectral_normalize(const Tensor& weight, PowerIteration& state, int iterations);

/// Differentiable form used during training: sigma_hat = v' W u with u, v
/// from the power iteration held constant, so gradients flow through both
/// the weight and sigma_hat.
Var spectral_normalize(const Var& weight, PowerIteration& state, int iterations);

} // namespace advloss
