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

#include "advloss/loss_catalog.hpp"

#include "advloss/errors.hpp"
#include "advloss/ops.hpp"

#include <cmath>

namespace advloss {

namespace {

double softplus(double v) { return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double sigmoid(double v)
{
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// Right-hand derivative of |t| composed as sign.
double right_sign(double t) { return t >= 0.0 ? 1.0 : -1.0; }

} // namespace

std::string_view to_string(GeneratorVariant v)
{
    switch (v) {
    case GeneratorVariant::Minimax: return "minimax";
    case GeneratorVariant::Nonsaturating: return "nonsaturating";
    case GeneratorVariant::Linear: return "linear";
    }
    return "?";
}

GeneratorVariant parse_generator_variant(std::string_view text)
{
    if (text == "minimax" || text == "M") return GeneratorVariant::Minimax;
    if (text == "nonsaturating" || text == "N") return GeneratorVariant::Nonsaturating;
    if (text == "linear" || text == "L") return GeneratorVariant::Linear;
    throw ConfigError("unknown generator variant: " + std::string(text));
}

double ComponentLoss::f(double y) const
{
    switch (family_) {
    case LossFamily::Classic: return -softplus(-y);
    case LossFamily::Wasserstein: return y;
    case LossFamily::LeastSquares: return -(y - 1.0) * (y - 1.0);
    case LossFamily::Hinge: return std::min(0.0, y - 1.0);
    case LossFamily::Absolute: return -std::fabs(1.0 - y);
    case LossFamily::Asymmetric: return -std::fabs(y);
    }
    return 0.0;
}

double ComponentLoss::g(double y) const
{
    switch (family_) {
    case LossFamily::Classic: return -softplus(y); // = -y - log(1 + e^-y)
    case LossFamily::Wasserstein: return -y;
    case LossFamily::LeastSquares: return -y * y;
    case LossFamily::Hinge: return std::min(0.0, -y - 1.0);
    case LossFamily::Absolute: return -std::fabs(y);
    case LossFamily::Asymmetric: return -y;
    }
    return 0.0;
}

double ComponentLoss::h(double y) const
{
    switch (h_) {
    case HKind::SameAsG: return g(y);
    case HKind::Softplus: return softplus(-y);
    case HKind::Negate: return -y;
    case HKind::SquaredGap: return (y - 1.0) * (y - 1.0);
    case HKind::AbsoluteGap: return std::fabs(1.0 - y);
    }
    return 0.0;
}

Derivatives ComponentLoss::derivatives(double y) const
{
    Derivatives d;
    switch (family_) {
    case LossFamily::Classic: {
        const double s = sigmoid(y), r = sigmoid(-y);
        d.df = r;
        d.dg = -s;
        d.d2f = d.d2g = -s * r;
        break;
    }
    case LossFamily::Wasserstein:
        d.df = 1.0;
        d.dg = -1.0;
        break;
    case LossFamily::LeastSquares:
        d.df = -2.0 * (y - 1.0);
        d.dg = -2.0 * y;
        d.d2f = d.d2g = -2.0;
        break;
    case LossFamily::Hinge:
        d.df = y < 1.0 ? 1.0 : 0.0;
        d.dg = y < -1.0 ? 0.0 : -1.0;
        d.kink = (y == 1.0 || y == -1.0);
        break;
    case LossFamily::Absolute:
        d.df = y < 1.0 ? 1.0 : -1.0; // sign(1 - y)
        d.dg = -right_sign(y);
        d.kink = (y == 0.0 || y == 1.0);
        break;
    case LossFamily::Asymmetric:
        d.df = -right_sign(y);
        d.dg = -1.0;
        d.kink = (y == 0.0);
        break;
    }
    return d;
}

std::vector<double> ComponentLoss::kinks() const
{
    switch (family_) {
    case LossFamily::Hinge: return {-1.0, 1.0};
    case LossFamily::Absolute: return {0.0, 1.0};
    case LossFamily::Asymmetric: return {0.0};
    default: return {};
    }
}

Var ComponentLoss::f(const Var& y) const
{
    switch (family_) {
    case LossFamily::Classic: return neg(softplus(neg(y)));
    case LossFamily::Wasserstein: return y;
    case LossFamily::LeastSquares: return neg(square(add_scalar(y, -1.0)));
    case LossFamily::Hinge: return neg(relu(add_scalar(neg(y), 1.0))); // min(0, y - 1)
    case LossFamily::Absolute: return neg(abs(add_scalar(y, -1.0)));
    case LossFamily::Asymmetric: return neg(abs(y));
    }
    return y;
}

Var ComponentLoss::g(const Var& y) const
{
    switch (family_) {
    case LossFamily::Classic: return neg(softplus(y));
    case LossFamily::Wasserstein: return neg(y);
    case LossFamily::LeastSquares: return neg(square(y));
    case LossFamily::Hinge: return neg(relu(add_scalar(y, 1.0))); // min(0, -y - 1)
    case LossFamily::Absolute: return neg(abs(y));
    case LossFamily::Asymmetric: return neg(y);
    }
    return y;
}

Var ComponentLoss::h(const Var& y) const
{
    switch (h_) {
    case HKind::SameAsG: return g(y);
    case HKind::Softplus: return softplus(neg(y));
    case HKind::Negate: return neg(y);
    case HKind::SquaredGap: return square(add_scalar(y, -1.0));
    case HKind::AbsoluteGap: return abs(add_scalar(y, -1.0));
    }
    return y;
}

const std::vector<std::string>& catalog_names()
{
    static const std::vector<std::string> names{
        "classic_minimax", "classic_nonsaturating", "classic_linear", "hinge_minimax",
        "hinge_nonsaturating", "hinge_linear", "wasserstein", "least_squares",
        "relativistic", "relativistic_hinge", "absolute", "asymmetric"};
    return names;
}

ComponentLoss get_loss(std::string_view name)
{
    using H = ComponentLoss::HKind;
    using V = GeneratorVariant;
    const std::string n(name);
    if (n == "classic_minimax" || n == "classic")
        return {"classic_minimax", LossFamily::Classic, H::SameAsG, V::Minimax, true};
    if (n == "classic_nonsaturating")
        return {n, LossFamily::Classic, H::Softplus, V::Nonsaturating, true};
    if (n == "classic_linear") return {n, LossFamily::Classic, H::Negate, V::Linear, true};
    if (n == "hinge_minimax") return {n, LossFamily::Hinge, H::SameAsG, V::Minimax, true};
    if (n == "hinge_nonsaturating") return {n, LossFamily::Hinge, H::Softplus, V::Nonsaturating, true};
    if (n == "hinge_linear" || n == "hinge")
        return {"hinge_linear", LossFamily::Hinge, H::Negate, V::Linear, true};
    if (n == "wasserstein") return {n, LossFamily::Wasserstein, H::SameAsG, V::Minimax, true};
    if (n == "least_squares") return {n, LossFamily::LeastSquares, H::SquaredGap, std::nullopt, true};
    if (n == "absolute") return {n, LossFamily::Absolute, H::AbsoluteGap, std::nullopt, true};
    if (n == "asymmetric") return {n, LossFamily::Asymmetric, H::SameAsG, V::Minimax, true};
    // Relativistic losses reuse the classic / hinge pair on centered
    // scores; see relativistic_scores().
    if (n == "relativistic") return {n, LossFamily::Classic, H::SameAsG, std::nullopt, false};
    if (n == "relativistic_hinge") return {n, LossFamily::Hinge, H::SameAsG, std::nullopt, false};
    throw NotInCatalog(n);
}

ComponentLoss epsilon_weighted(const ComponentLoss& loss, double eps)
{
    if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidWeight("epsilon must be positive and finite");
    if (!loss.pointwise()) throw Unsupported("epsilon weighting of batch-coupled loss " + loss.name());
    ComponentLoss out = loss;
    out.epsilon_ = eps;
    return out;
}

ComponentLoss with_generator(const ComponentLoss& loss, GeneratorVariant variant)
{
    ComponentLoss out = loss;
    out.variant_ = variant;
    switch (variant) {
    case GeneratorVariant::Minimax: out.h_ = ComponentLoss::HKind::SameAsG; break;
    case GeneratorVariant::Nonsaturating: out.h_ = ComponentLoss::HKind::Softplus; break;
    case GeneratorVariant::Linear: out.h_ = ComponentLoss::HKind::Negate; break;
    }
    return out;
}

} // namespace advloss
