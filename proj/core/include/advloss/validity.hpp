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

// Numerical checks of the conditions under which an (f, g) pair makes the
// generator objective a divergence-like measure. Grid checks can refute a
// universally quantified condition but only ever support it, hence the
// "Supported"/"Refuted" vocabulary.

#include "advloss/landscape.hpp"

#include <optional>
#include <string>
#include <vector>

namespace advloss {

enum class Verdict { SupportedStrong, SupportedWeak, Refuted, Inconclusive };

std::string_view to_string(Verdict v);

struct ValidityConfig {
    std::size_t gamma_intervals = 1000; // grid step 1e-3 on [0, 1]
    double tau = 1e-9;
    SearchConfig search;
    std::size_t concavity_points = 10000;
    double root_tolerance = 1e-7; // |eps f' + g'| and |eps f'| thresholds at y*
};

/// psi(gamma) + psi(1 - gamma) - 2 psi(1/2) per grid point.
struct NecessaryResult {
    std::vector<double> margins; // aligned with the profile's gammas
    bool anchored = false;       // psi(1/2) finite
    bool pass = false;
};

struct SufficientResult {
    bool global_min_at_half = false;
    bool unique = false;
    double min_gamma = 0.0; // first grid argmin of psi
    double min_psi = 0.0;
};

struct Theorem5Record {
    std::optional<double> y_star;
    std::vector<double> roots; // every root of eps f - g found on the search range
    bool boundary_condition_ok = false;
    bool concavity_ok = false;
    bool kink_blocked = false;
    bool holds() const noexcept { return y_star && boundary_condition_ok && concavity_ok && !kink_blocked; }
};

struct ValidityReport {
    std::string loss;
    double epsilon = 1.0;
    PsiProfile profile;
    NecessaryResult necessary;        // non-strict
    NecessaryResult necessary_strict; // strict
    SufficientResult sufficient;
    Theorem5Record theorem5;
    Verdict verdict = Verdict::Inconclusive;
};

/// Index of gamma = 1/2 in a grid symmetric about 1/2. Throws
/// InvalidArgument when the grid is not symmetric or lacks 1/2.
std::size_t half_index(const PsiProfile& profile);

/// Non-strict: every margin >= -tau. Strict: every margin away from 1/2
/// is > tau. Infinite margins pass. An unanchored profile never passes.
NecessaryResult check_necessary(const PsiProfile& profile, bool strict, double tau = 1e-9);

/// Global minimum at 1/2 (psi >= psi(1/2) - tau everywhere), and unique
/// (psi > psi(1/2) + tau wherever |gamma - 1/2| exceeds one grid step).
SufficientResult check_sufficient(const PsiProfile& profile, double tau = 1e-9);

/// Searches for y* with eps f(y*) = g(y*) and eps f'(y*) = -g'(y*) != 0 and
/// checks eps f'' + g'' <= tau on a dense grid away from kinks. A root at a
/// kink sets kink_blocked. Throws Unsupported for batch-coupled losses.
Theorem5Record check_theorem5(const ComponentLoss& loss, const ValidityConfig& config = {});

ValidityReport classify(const ComponentLoss& loss, const ValidityConfig& config = {});

/// Machine-readable report with keys margins, min_location, theorem5, verdict.
std::string to_json(const ValidityReport& report);

} // namespace advloss
