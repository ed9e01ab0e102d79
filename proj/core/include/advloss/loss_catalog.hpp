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

// Component functions (f, g, h) of adversarial losses. The discriminator
// maximizes  eps * E_real[f(D)] + E_fake[g(D)]  and the generator
// minimizes  E_fake[h(D)].

#include "advloss/autodiff.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace advloss {

/// Shape of the (f, g) pair.
enum class LossFamily { Classic, Wasserstein, LeastSquares, Hinge, Absolute, Asymmetric };

/// Generator-side objective.
enum class GeneratorVariant {
    Minimax,       // h = g
    Nonsaturating, // h(y) = log(1 + e^-y)
    Linear,        // h(y) = -y
};

std::string_view to_string(GeneratorVariant v);
GeneratorVariant parse_generator_variant(std::string_view text);

/// f', g', f'', g'' at a point. At a kink the right-hand limits are
/// returned and `kink` is set.
struct Derivatives {
    double df = 0, dg = 0, d2f = 0, d2g = 0;
    bool kink = false;
};

class ComponentLoss {
public:
    const std::string& name() const noexcept { return name_; }
    LossFamily family() const noexcept { return family_; }
    /// False for the relativistic losses, which couple a whole batch.
    bool pointwise() const noexcept { return pointwise_; }
    double epsilon() const noexcept { return epsilon_; }
    /// Generator variant when h is one of the three standard choices.
    std::optional<GeneratorVariant> variant() const noexcept { return variant_; }

    double f(double y) const;
    double g(double y) const;
    double h(double y) const;
    Derivatives derivatives(double y) const;
    /// Points where f or g is not differentiable.
    std::vector<double> kinks() const;

    Var f(const Var& y) const;
    Var g(const Var& y) const;
    Var h(const Var& y) const;

private:
    enum class HKind { SameAsG, Softplus, Negate, SquaredGap, AbsoluteGap };

    ComponentLoss(std::string name, LossFamily family, HKind h, std::optional<GeneratorVariant> variant,
                  bool pointwise)
        : name_(std::move(name)), family_(family), h_(h), variant_(variant), pointwise_(pointwise) {}

    std::string name_;
    LossFamily family_;
    HKind h_;
    std::optional<GeneratorVariant> variant_;
    bool pointwise_;
    double epsilon_ = 1.0;

    friend ComponentLoss get_loss(std::string_view name);
    friend ComponentLoss epsilon_weighted(const ComponentLoss& loss, double eps);
    friend ComponentLoss with_generator(const ComponentLoss& loss, GeneratorVariant variant);
};

/// Catalog names, in table order.
const std::vector<std::string>& catalog_names();

/// Looks up a loss by name; "hinge" and "classic" are accepted as aliases
/// for hinge_linear and classic_minimax. Throws NotInCatalog.
ComponentLoss get_loss(std::string_view name);

/// Copy with weight `eps` on the f term. Throws InvalidWeight for eps <= 0
/// and Unsupported for batch-coupled losses.
ComponentLoss epsilon_weighted(const ComponentLoss& loss, double eps);

/// Copy whose generator objective is replaced by `variant`.
ComponentLoss with_generator(const ComponentLoss& loss, GeneratorVariant variant);

/// f', g', f'', g'' with kink flag.
inline Derivatives eval_derivatives(const ComponentLoss& loss, double y) { return loss.derivatives(y); }

} // namespace advloss
