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

#include "advloss/validity.hpp"

#include "advloss/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>

namespace advloss {

namespace {

double scaled_f(const ComponentLoss& loss, double y) { return loss.epsilon() * loss.f(y); }
double gap(const ComponentLoss& loss, double y) { return scaled_f(loss, y) - loss.g(y); }

int sign_of(double v, double zero) { return v > zero ? 1 : (v < -zero ? -1 : 0); }

nlohmann::json number_or_string(double v)
{
    if (std::isfinite(v)) return v;
    return format_number(v);
}

} // namespace

std::string_view to_string(Verdict v)
{
    switch (v) {
    case Verdict::SupportedStrong: return "SupportedStrong";
    case Verdict::SupportedWeak: return "SupportedWeak";
    case Verdict::Refuted: return "Refuted";
    case Verdict::Inconclusive: return "Inconclusive";
    }
    return "?";
}

std::size_t half_index(const PsiProfile& profile)
{
    const std::size_t n = profile.gammas.size();
    if (n % 2 == 0) throw InvalidArgument("gamma grid must have an odd number of points to contain 1/2");
    for (std::size_t i = 0; i < n; ++i)
        if (std::fabs(profile.gammas[i] + profile.gammas[n - 1 - i] - 1.0) > 1e-12)
            throw InvalidArgument("gamma grid is not symmetric about 1/2");
    const std::size_t mid = n / 2;
    if (std::fabs(profile.gammas[mid] - 0.5) > 1e-12) throw InvalidArgument("gamma grid lacks 1/2");
    return mid;
}

NecessaryResult check_necessary(const PsiProfile& profile, bool strict, double tau)
{
    const std::size_t mid = half_index(profile);
    const std::size_t n = profile.gammas.size();
    NecessaryResult result;
    const double anchor = profile.psi[mid];
    result.anchored = std::isfinite(anchor);
    result.margins.assign(n, std::numeric_limits<double>::quiet_NaN());
    if (!result.anchored) return result;

    result.pass = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double a = profile.psi[i], b = profile.psi[n - 1 - i];
        const double margin = (std::isinf(a) || std::isinf(b)) ? std::numeric_limits<double>::infinity()
                                                                : a + b - 2.0 * anchor;
        result.margins[i] = margin;
        if (strict) {
            if (i != mid && !(margin > tau)) result.pass = false;
        } else if (!(margin >= -tau)) {
            result.pass = false;
        }
    }
    return result;
}

SufficientResult check_sufficient(const PsiProfile& profile, double tau)
{
    const std::size_t mid = half_index(profile);
    SufficientResult result;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < profile.psi.size(); ++i)
        if (profile.psi[i] < profile.psi[arg] - tau) arg = i;
    result.min_gamma = profile.gammas[arg];
    result.min_psi = profile.psi[arg];

    const double anchor = profile.psi[mid];
    if (!std::isfinite(anchor)) return result;
    result.global_min_at_half = true;
    result.unique = true;
    for (std::size_t i = 0; i < profile.psi.size(); ++i) {
        if (profile.psi[i] < anchor - tau) result.global_min_at_half = false;
        const std::size_t distance = i > mid ? i - mid : mid - i;
        if (distance > 1 && !(profile.psi[i] > anchor + tau)) result.unique = false;
    }
    result.unique = result.unique && result.global_min_at_half;
    return result;
}

Theorem5Record check_theorem5(const ComponentLoss& loss, const ValidityConfig& config)
{
    if (!loss.pointwise()) throw Unsupported("theorem checks need a pointwise loss, got " + loss.name());
    constexpr double kZero = 1e-12;
    constexpr double kKinkSnap = 1e-9;
    const auto ys = linspace(-config.search.y_max, config.search.y_max, config.concavity_points);

    Theorem5Record record;
    auto add_root = [&](double y) {
        if (record.roots.empty() || std::fabs(record.roots.back() - y) > 1e-9) record.roots.push_back(y);
    };
    for (std::size_t i = 0; i + 1 < ys.size(); ++i) {
        const int a = sign_of(gap(loss, ys[i]), kZero);
        const int b = sign_of(gap(loss, ys[i + 1]), kZero);
        if (i == 0 && a == 0) add_root(ys[0]);
        if (a == b) continue;
        double lo = ys[i], hi = ys[i + 1];
        if (a * b < 0) {
            // Plain sign change.
            for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (sign_of(gap(loss, mid), 0.0) == a)
                    lo = mid;
                else
                    hi = mid;
            }
            add_root(0.5 * (lo + hi));
        } else {
            // Entering or leaving a stretch where eps f == g: locate its edge.
            const bool zero_right = (b == 0);
            for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
                const double mid = 0.5 * (lo + hi);
                const bool is_zero = sign_of(gap(loss, mid), kZero) == 0;
                if (is_zero == zero_right)
                    hi = mid;
                else
                    lo = mid;
            }
            add_root(zero_right ? hi : lo);
        }
    }

    const auto kinks = loss.kinks();
    for (double& root : record.roots)
        for (double k : kinks)
            if (std::fabs(root - k) < kKinkSnap) root = k;

    auto root_ok = [&](double y) {
        const Derivatives d = loss.derivatives(y);
        const double df = loss.epsilon() * d.df;
        return !d.kink && std::fabs(df + d.dg) < config.root_tolerance && std::fabs(df) > config.root_tolerance;
    };
    for (double root : record.roots)
        if (root_ok(root)) {
            record.y_star = root;
            break;
        }
    if (!record.y_star && !record.roots.empty()) record.y_star = record.roots.front();
    if (record.y_star) {
        record.kink_blocked = loss.derivatives(*record.y_star).kink;
        record.boundary_condition_ok = root_ok(*record.y_star);
    }

    record.concavity_ok = true;
    for (double y : ys) {
        const Derivatives d = loss.derivatives(y);
        if (d.kink) continue;
        if (loss.epsilon() * d.d2f + d.d2g > config.tau) {
            record.concavity_ok = false;
            break;
        }
    }
    return record;
}

ValidityReport classify(const ComponentLoss& loss, const ValidityConfig& config)
{
    if (!loss.pointwise()) throw Unsupported("validity checks need a pointwise loss, got " + loss.name());
    ValidityReport report;
    report.loss = loss.name();
    report.epsilon = loss.epsilon();
    const auto gammas = uniform_grid(config.gamma_intervals);
    report.profile = psi_profile(loss, gammas, config.search);
    report.necessary = check_necessary(report.profile, false, config.tau);
    report.necessary_strict = check_necessary(report.profile, true, config.tau);
    report.sufficient = check_sufficient(report.profile, config.tau);
    report.theorem5 = check_theorem5(loss, config);

    if (!report.necessary.anchored) {
        report.verdict = Verdict::Inconclusive;
    } else if (!report.necessary.pass) {
        report.verdict = Verdict::Refuted;
    } else if (report.sufficient.unique || report.theorem5.holds()) {
        // A strong claim must agree with the strict necessary condition.
        report.verdict = report.necessary_strict.pass ? Verdict::SupportedStrong : Verdict::Refuted;
    } else if (report.sufficient.global_min_at_half) {
        report.verdict = Verdict::SupportedWeak;
    } else {
        report.verdict = Verdict::Inconclusive;
    }
    return report;
}

std::string to_json(const ValidityReport& report)
{
    nlohmann::json margins = nlohmann::json::array();
    for (std::size_t i = 0; i < report.profile.gammas.size(); ++i)
        margins.push_back({{"gamma", report.profile.gammas[i]},
                           {"margin", number_or_string(report.necessary.margins[i])}});
    nlohmann::json t5 = {
        {"y_star", report.theorem5.y_star ? nlohmann::json(*report.theorem5.y_star) : nlohmann::json(nullptr)},
        {"roots", report.theorem5.roots},
        {"boundary_condition_ok", report.theorem5.boundary_condition_ok},
        {"concavity_ok", report.theorem5.concavity_ok},
        {"kink_blocked", report.theorem5.kink_blocked},
        {"holds", report.theorem5.holds()},
    };
    nlohmann::json j = {
        {"loss", report.loss},
        {"epsilon", report.epsilon},
        {"margins", margins},
        {"necessary_pass", report.necessary.pass},
        {"necessary_strict_pass", report.necessary_strict.pass},
        {"min_location",
         {{"gamma", report.sufficient.min_gamma},
          {"psi", number_or_string(report.sufficient.min_psi)},
          {"global_min_at_half", report.sufficient.global_min_at_half},
          {"unique", report.sufficient.unique}}},
        {"theorem5", t5},
        {"verdict", std::string(to_string(report.verdict))},
    };
    return j.dump(2);
}

} // namespace advloss
