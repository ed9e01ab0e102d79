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

// DANTest engine: a classifier G and a pair critic D trained adversarially,
// scored by G's test error rate.

#include "advloss/data_mnist.hpp"
#include "advloss/loss_catalog.hpp"
#include "advloss/nn_models.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace advloss {

enum class PenaltyKind { None, Coupled, Local, R1, R2 };
enum class PenaltySide { TwoSide, OneSide };

/// How a one-side penalty maps the gradient norm x: max(0, x - k)^2, or
/// the raw max(x, k).
enum class OneSideForm { SquaredHinge, RawMax };

struct PenaltySpec {
    PenaltyKind kind = PenaltyKind::None;
    PenaltySide side = PenaltySide::TwoSide;
    double lambda = 10.0;
    double k = 1.0;
    double c = 0.01;
    OneSideForm one_side_form = OneSideForm::SquaredHinge;

    void validate() const;
};

/// Regularizer label such as "tcgp", "sn+olgp", "r1" or "none".
struct Regularizer {
    PenaltySpec penalty;
    bool spectral_norm = false;
};

Regularizer parse_regularizer(std::string_view name);
std::string regularizer_name(const Regularizer& r);
/// The 14 settings of the full comparison, in table order.
const std::vector<std::string>& regularizer_names();

struct AdamConfig {
    double alpha = 0.001;
    double beta1_g = 0.0;
    double beta1_d = 0.0;
    double beta2 = 0.9;
    double eps = 1e-8;
};

struct DanConfig {
    std::string loss = "classic_nonsaturating";
    std::optional<GeneratorVariant> generator;
    double epsilon = 1.0;
    PenaltySpec penalty;
    bool spectral_norm = false;
    AdamConfig optimizer;
    std::size_t batch = 64;
    std::size_t steps = 100000;
    std::size_t eval_every = 100;
    DatasetVariant dataset = DatasetVariant::Standard;
    std::uint64_t dataset_seed = 0;
    std::size_t train_subset = 0; // 0 keeps the whole training set
    std::uint64_t subset_seed = 20200101;
    std::uint64_t seed = 0;

    void validate() const;
    ComponentLoss resolve_loss() const;
};

nlohmann::json to_json(const DanConfig& config);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
DanConfig config_from_json(const nlohmann::json& j, DanConfig base = {});
/// Stable 16-hex-digit digest of the canonical JSON form.
std::string config_hash(const DanConfig& config);

struct EvalPoint {
    std::size_t step;
    double error;
};

struct RunRecord {
    std::vector<EvalPoint> series;
    double initial_error = 0.0;
    double final_error = 0.0;
    double wall_seconds = 0.0;
    std::string config_hash;
    std::optional<std::size_t> fault_step;
    std::string fault_message;

    bool operator==(const RunRecord& other) const; // ignores wall time
};

std::string series_csv(const RunRecord& record);
nlohmann::json summary_json(const RunRecord& record);
void write_run(const RunRecord& record, const DanConfig& config, const std::filesystem::path& dir,
               const std::string& stem);
/// Reads a run written by write_run.
RunRecord read_run(const std::filesystem::path& dir, const std::string& stem);

/// Images (batch, 28, 28, 1) with labels (batch, 10).
struct PairBatch {
    Var images;
    Var labels;
};

PairBatch make_batch(const Dataset& data, const std::vector<std::size_t>& indices);

/// Discriminator objective in minimization form without the penalty:
/// -(eps * mean f(real) + mean g(fake)).
Var d_loss(const ComponentLoss& loss, const Var& real_scores, const Var& fake_scores);
/// Generator objective mean h(fake). Relativistic losses also use real scores.
Var g_loss(const ComponentLoss& loss, const Var& real_scores, const Var& fake_scores);

struct RelativisticLosses {
    Var d;
    Var g;
};
/// Relativistic average losses on centred scores C_r - mean C_f and
/// C_f - mean C_r, in logistic or hinge form.
RelativisticLosses relativistic_scores(bool hinge, const Var& real_scores, const Var& fake_scores);

/// Penalty sample points. `forced_u` pins the interpolation weight.
PairBatch sample_penalty_points(PenaltyKind kind, const PairBatch& real, const PairBatch& fake, double c,
                                std::mt19937_64& rng, std::optional<double> forced_u = std::nullopt);

using Critic = std::function<Var(const Var& images, const Var& labels)>;

/// Per-sample Euclidean norm of the critic's gradient at the points,
/// taken over the full (image, label) input. Differentiable.
Var critic_gradient_norm(const Critic& critic, const PairBatch& points, bool squared = false);

/// lambda * mean R(|grad D|) for the penalty kind and side.
Var penalty_term(const PenaltySpec& spec, const Critic& critic, const PairBatch& points);

class Adam {
public:
    Adam(double alpha, double beta1, double beta2, double eps);
    void step(std::vector<NamedParam>& params, const std::vector<Var>& grads);

private:
    double alpha_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

/// Fraction of samples whose argmax class (first maximum wins) differs
/// from the label, with G in evaluation mode.
double evaluate(Generator& generator, const Dataset& test);

using Progress = std::function<void(std::size_t step, double error)>;

/// Final model states, in checkpoint form.
struct TrainedState {
    std::vector<NamedTensor> generator;
    std::vector<NamedTensor> discriminator;
};

/// Alternates one D update and one G update per step. Non-finite values
/// mark a fault: training stops and the remaining series repeats the
/// error measured after the faulty update.
RunRecord train(const DanConfig& config, const Dataset& train_data, const Dataset& test, const Progress& progress = {},
                TrainedState* final_state = nullptr);

/// Applies the config's variant and subset to the standard training set.
Dataset prepare_training_set(const DanConfig& config, const Dataset& standard);

} // namespace advloss
