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

// Pointwise payoff  Psi(gamma, y) = eps*gamma*f(y) + (1 - gamma)*g(y)  and
// the discriminator-optimal payoff  psi(gamma) = max_y Psi(gamma, y).

#include "advloss/loss_catalog.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace advloss {

struct SearchConfig {
    double y_max = 50.0;             // inner search on [-y_max, y_max]
    std::size_t grid_points = 4096;  // dense grid before refinement
    double plateau_tolerance = 1e-7; // grid values this close to the max join the argmax hull
    double slope_tolerance = 1e-6;   // outward boundary slope that signals divergence
};

enum class ArgmaxKind { Point, Interval, Divergent };

/// Point: lo == hi. Interval: [lo, hi]. Divergent: lo == hi == -inf or
/// +inf, the direction in which Psi grows without bound.
struct Argmax {
    ArgmaxKind kind = ArgmaxKind::Point;
    double lo = 0.0;
    double hi = 0.0;
};

struct PsiValue {
    double psi = 0.0; // +inf when the maximization diverges
    Argmax argmax;
    bool divergent() const noexcept { return argmax.kind == ArgmaxKind::Divergent; }
};

struct PsiProfile {
    std::vector<double> gammas;
    std::vector<double> psi;
    std::vector<Argmax> argmax;
    double search_bound = 0.0;
};

/// Throws Unsupported for batch-coupled losses.
double psi_big(const ComponentLoss& loss, double gamma, double y);

/// Grid maximization plus golden-section refinement of the winning cell.
PsiValue psi_small(const ComponentLoss& loss, double gamma, const SearchConfig& search = {});

/// gamma_i = i / intervals, i = 0..intervals.
std::vector<double> uniform_grid(std::size_t intervals);
std::vector<double> linspace(double lo, double hi, std::size_t points);

PsiProfile psi_profile(const ComponentLoss& loss, std::span<const double> gammas, const SearchConfig& search = {});

/// psi(gamma) == psi(1 - gamma) within `tolerance` for every mirrored pair
/// of a grid symmetric about 1/2. Two divergent values count as equal.
bool psi_symmetric(const PsiProfile& profile, double tolerance);

struct LandscapeFiles {
    std::filesystem::path psi_big;
    std::filesystem::path psi;
};

/// Writes `<stem>_psi_big.csv` (gamma,y,psi_big) and `<stem>_psi.csv`
/// (gamma,psi,argmax_lo,argmax_hi) into `out_dir`. Divergent values are
/// written as "inf" / "-inf". Throws InvalidArgument for empty or
/// non-increasing grids and IoError for unwritable paths.
LandscapeFiles export_landscape(const ComponentLoss& loss, std::span<const double> gammas,
                                std::span<const double> ys, const std::filesystem::path& out_dir,
                                const std::string& stem, const SearchConfig& search = {});

/// y range used for exports of each loss family, chosen so the saddle
/// and the argmax curve are both visible.
std::pair<double, double> default_y_range(const ComponentLoss& loss);

/// Formats a double for CSV output; infinities become "inf"/"-inf".
std::string format_number(double value);

} // namespace advloss
