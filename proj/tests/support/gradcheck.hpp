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

// Central-difference gradient checks shared by the unit tests.

#include "advloss/autodiff.hpp"
#include "advloss/ops.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace advloss::testing {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0)
{
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

inline double relative_error(double a, double b, double floor = 1e-6)
{
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), floor});
}

struct GradCheck {
    double max_error = 0.0;
    std::size_t checked = 0;
};

/// Compares grad(f, params) with central differences of f. At most
/// `per_param` entries of each parameter are probed, spread evenly.
inline GradCheck check_gradients(const std::function<Var()>& f, std::vector<Var> params, double step = 1e-5,
                                  std::size_t per_param = 0)
{
    const auto analytic = grad(f(), params);
    GradCheck result;
    for (std::size_t p = 0; p < params.size(); ++p) {
        Tensor& value = params[p].mutable_value();
        const std::size_t n = value.size();
        const std::size_t stride = per_param == 0 || per_param >= n ? 1 : n / per_param;
        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = value[i];
            value[i] = saved + step;
            // Graph recording stays on: f may itself differentiate.
            const double up = f().value().item();
            value[i] = saved - step;
            const double down = f().value().item();
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            result.max_error = std::max(result.max_error, relative_error(analytic[p].value()[i], numeric));
            ++result.checked;
        }
    }
    return result;
}

} // namespace advloss::testing
