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

#include "advloss/landscape.hpp"

#include "advloss/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace advloss {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Golden-section search for the maximum of a unimodal function on [a, b].
std::pair<double, double> golden_max(const ComponentLoss& loss, double gamma, double a, double b)
{
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - ratio * (b - a);
    double d = a + ratio * (b - a);
    double fc = psi_big(loss, gamma, c);
    double fd = psi_big(loss, gamma, d);
    for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, std::fabs(a) + std::fabs(b)); ++it) {
        if (fc >= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = psi_big(loss, gamma, c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = psi_big(loss, gamma, d);
        }
    }
    return fc >= fd ? std::pair{c, fc} : std::pair{d, fd};
}

// Boundary between `inside` (Psi >= threshold) and `outside`.
double bisect_edge(const ComponentLoss& loss, double gamma, double threshold, double inside, double outside)
{
    for (int it = 0; it < 100 && std::fabs(inside - outside) > 1e-12; ++it) {
        const double mid = 0.5 * (inside + outside);
        if (psi_big(loss, gamma, mid) >= threshold)
            inside = mid;
        else
            outside = mid;
    }
    return inside;
}

void check_grid(std::span<const double> grid, const char* what)
{
    if (grid.empty()) throw InvalidArgument(std::string(what) + " grid is empty");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw InvalidArgument(std::string(what) + " grid is not increasing");
}

} // namespace

double psi_big(const ComponentLoss& loss, double gamma, double y)
{
    if (!loss.pointwise()) throw Unsupported("no (f, g) landscape for batch-coupled loss " + loss.name());
    return loss.epsilon() * gamma * loss.f(y) + (1.0 - gamma) * loss.g(y);
}

PsiValue psi_small(const ComponentLoss& loss, double gamma, const SearchConfig& search)
{
    const std::size_t n = std::max<std::size_t>(search.grid_points, 3);
    const double step = 2.0 * search.y_max / static_cast<double>(n - 1);
    auto y_at = [&](std::size_t i) { return i + 1 == n ? search.y_max : -search.y_max + static_cast<double>(i) * step; };

    std::vector<double> values(n);
    std::size_t best = 0;
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = psi_big(loss, gamma, y_at(i));
        if (values[i] > values[best]) best = i;
    }

    // A maximum on the boundary that is still rising outward means the
    // supremum over the real line is unbounded.
    if (best == 0 && (values[0] - values[1]) / step > search.slope_tolerance)
        return {kInf, {ArgmaxKind::Divergent, -kInf, -kInf}};
    if (best == n - 1 && (values[n - 1] - values[n - 2]) / step > search.slope_tolerance)
        return {kInf, {ArgmaxKind::Divergent, kInf, kInf}};

    double top = values[best];
    double y_star = y_at(best);
    const auto [y_ref, v_ref] = golden_max(loss, gamma, y_at(best == 0 ? 0 : best - 1), y_at(std::min(best + 1, n - 1)));
    if (v_ref > top) {
        top = v_ref;
        y_star = y_ref;
    }

    const double threshold = top - search.plateau_tolerance;
    std::size_t first = n, last = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (values[i] >= threshold) {
            first = std::min(first, i);
            last = i;
        }
    double lo = y_star, hi = y_star;
    if (first < n) {
        const double left = first == 0 ? -search.y_max : bisect_edge(loss, gamma, threshold, y_at(first), y_at(first - 1));
        const double right = last == n - 1 ? search.y_max : bisect_edge(loss, gamma, threshold, y_at(last), y_at(last + 1));
        lo = std::min(lo, left);
        hi = std::max(hi, right);
    }
    if (hi - lo <= 2.0 * step) return {top, {ArgmaxKind::Point, y_star, y_star}};
    return {top, {ArgmaxKind::Interval, lo, hi}};
}

std::vector<double> uniform_grid(std::size_t intervals)
{
    std::vector<double> grid(intervals + 1);
    for (std::size_t i = 0; i <= intervals; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(intervals);
    return grid;
}

std::vector<double> linspace(double lo, double hi, std::size_t points)
{
    if (points == 1) return {lo};
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i)
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    grid.back() = hi;
    return grid;
}

PsiProfile psi_profile(const ComponentLoss& loss, std::span<const double> gammas, const SearchConfig& search)
{
    check_grid(gammas, "gamma");
    PsiProfile profile;
    profile.search_bound = search.y_max;
    profile.gammas.assign(gammas.begin(), gammas.end());
    profile.psi.reserve(gammas.size());
    profile.argmax.reserve(gammas.size());
    for (double gamma : gammas) {
        const PsiValue v = psi_small(loss, gamma, search);
        profile.psi.push_back(v.psi);
        profile.argmax.push_back(v.argmax);
    }
    return profile;
}

bool psi_symmetric(const PsiProfile& profile, double tolerance)
{
    const std::size_t n = profile.psi.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = n - 1 - i;
        if (std::fabs(profile.gammas[i] + profile.gammas[j] - 1.0) > 1e-12)
            throw InvalidArgument("gamma grid is not symmetric about 1/2");
        const double a = profile.psi[i], b = profile.psi[j];
        if (std::isinf(a) || std::isinf(b)) {
            if (a != b) return false;
            continue;
        }
        if (std::fabs(a - b) > tolerance) return false;
    }
    return true;
}

std::string format_number(double value)
{
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    if (std::isnan(value)) return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

LandscapeFiles export_landscape(const ComponentLoss& loss, std::span<const double> gammas,
                                std::span<const double> ys, const std::filesystem::path& out_dir,
                                const std::string& stem, const SearchConfig& search)
{
    check_grid(gammas, "gamma");
    check_grid(ys, "y");
    if (!loss.pointwise()) throw Unsupported("no (f, g) landscape for batch-coupled loss " + loss.name());

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    LandscapeFiles files{out_dir / (stem + "_psi_big.csv"), out_dir / (stem + "_psi.csv")};

    std::ofstream big(files.psi_big);
    if (!big) throw IoError("cannot write " + files.psi_big.string());
    big << "gamma,y,psi_big\n";
    for (double gamma : gammas)
        for (double y : ys)
            big << format_number(gamma) << ',' << format_number(y) << ',' << format_number(psi_big(loss, gamma, y))
                << '\n';

    const PsiProfile profile = psi_profile(loss, gammas, search);
    std::ofstream small(files.psi);
    if (!small) throw IoError("cannot write " + files.psi.string());
    small << "gamma,psi,argmax_lo,argmax_hi\n";
    for (std::size_t i = 0; i < profile.gammas.size(); ++i)
        small << format_number(profile.gammas[i]) << ',' << format_number(profile.psi[i]) << ','
              << format_number(profile.argmax[i].lo) << ',' << format_number(profile.argmax[i].hi) << '\n';

    if (!big || !small) throw IoError("failed writing landscape files in " + out_dir.string());
    return files;
}

std::pair<double, double> default_y_range(const ComponentLoss& loss)
{
    switch (loss.family()) {
    case LossFamily::Classic: return {-6.0, 6.0};
    case LossFamily::Wasserstein: return {-2.0, 2.0};
    case LossFamily::LeastSquares: return {-1.0, 2.0};
    case LossFamily::Hinge: return {-3.0, 3.0};
    case LossFamily::Absolute: return {-1.0, 2.0};
    case LossFamily::Asymmetric: return {-2.0, 2.0};
    }
    return {-5.0, 5.0};
}

} // namespace advloss
