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

#include "advloss/dantest.hpp"
#include "advloss/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

using namespace advloss;

namespace {

Var column(std::initializer_list<double> values)
{
    return constant(Tensor(Shape{values.size(), 1}, std::vector<double>(values)));
}

Var filled(std::size_t n, double v) { return constant(Tensor(Shape{n, 1}, v)); }

// D(x, y) = <x, wx> + <y, wy> with all weight on the first pixel.
Critic linear_critic(double norm)
{
    Tensor wx(Shape{kPixels, 1}, 0.0), wy(Shape{kNumClasses, 1}, 0.0);
    wx[0] = norm;
    return [wx, wy](const Var& x, const Var& y) {
        const std::size_t n = x.shape()[0];
        return add(matmul(reshape(x, {n, kPixels}), constant(wx)), matmul(y, constant(wy)));
    };
}

PairBatch random_pairs(std::size_t n, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor images(Shape{n, kImageSide, kImageSide, 1}), labels(Shape{n, kNumClasses}, 0.0);
    for (double& x : images.data()) x = u(rng);
    for (std::size_t i = 0; i < n; ++i) labels[i * kNumClasses + rng() % kNumClasses] = 1.0;
    return {constant(images), constant(labels)};
}

// Ten classes, each a bright bar at a class-specific column.
Dataset toy_digits(std::size_t per_class, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, 0.2);
    Dataset d;
    for (std::size_t i = 0; i < per_class * 10; ++i) {
        const auto label = static_cast<std::uint8_t>(i % 10);
        std::vector<double> img(kPixels);
        for (double& p : img) p = noise(rng);
        for (std::size_t r = 4; r < 24; ++r) img[r * 28 + 4 + 2 * label] = 1.0;
        d.images.insert(d.images.end(), img.begin(), img.end());
        d.labels.push_back(label);
    }
    return d;
}

DanConfig tiny_config()
{
    DanConfig c;
    c.steps = 20;
    c.eval_every = 10;
    c.batch = 8;
    c.seed = 7;
    return c;
}

} // namespace

TEST(DLoss, Examples)
{
    EXPECT_NEAR(d_loss(get_loss("wasserstein"), filled(4, 0.0), filled(4, 0.0)).value().item(), 0.0, 1e-12);
    EXPECT_NEAR(d_loss(get_loss("hinge"), filled(4, 1.0), filled(4, -1.0)).value().item(), 0.0, 1e-12);
    EXPECT_NEAR(d_loss(get_loss("classic_minimax"), filled(4, 0.0), filled(4, 0.0)).value().item(),
                2.0 * std::log(2.0), 1e-12);
}

TEST(DLoss, EpsilonWeightsTheRealTerm)
{
    const Var real = column({0.3, -1.2, 2.0}), fake = column({0.1, 0.4, -0.7});
    const ComponentLoss base = get_loss("classic_nonsaturating");
    const double plain = d_loss(base, real, fake).value().item();
    EXPECT_EQ(d_loss(epsilon_weighted(base, 1.0), real, fake).value().item(), plain);
    const double zero_fake = d_loss(base, real, filled(3, -1e9)).value().item();
    const double weighted = d_loss(epsilon_weighted(base, 2.0), real, filled(3, -1e9)).value().item();
    EXPECT_NEAR(weighted, 2.0 * zero_fake, 1e-9);
}

TEST(GLoss, Examples)
{
    EXPECT_NEAR(g_loss(get_loss("wasserstein"), {}, filled(3, 0.0)).value().item(), 0.0, 1e-12);
    const ComponentLoss hinge_linear = with_generator(get_loss("hinge"), GeneratorVariant::Linear);
    EXPECT_NEAR(g_loss(hinge_linear, {}, filled(3, 2.0)).value().item(), -2.0, 1e-12);
    EXPECT_NEAR(g_loss(get_loss("classic_nonsaturating"), {}, filled(3, 0.0)).value().item(), std::log(2.0), 1e-12);
}

TEST(Relativistic, Examples)
{
    const Var s = filled(3, 0.7);
    EXPECT_NEAR(relativistic_scores(false, s, s).d.value().item(), 2.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(relativistic_scores(false, s, s).g.value().item(), 2.0 * std::log(2.0), 1e-12);
    EXPECT_NEAR(relativistic_scores(true, column({2.0, 3.0}), column({0.0, 0.5})).d.value().item(), 0.0, 1e-12);
    EXPECT_NEAR(relativistic_scores(false, column({0.4}), column({0.4})).d.value().item(), 2.0 * std::log(2.0),
                1e-12);
    // Hinge at zero centred scores costs 1 on each side.
    EXPECT_NEAR(relativistic_scores(true, s, s).d.value().item(), 2.0, 1e-12);
}

TEST(PenaltyPoints, Endpoints)
{
    const PairBatch real = random_pairs(5, 1), fake = random_pairs(5, 2);
    std::mt19937_64 rng(3);
    const auto at0 = sample_penalty_points(PenaltyKind::Coupled, real, fake, 0.01, rng, 0.0);
    const auto at1 = sample_penalty_points(PenaltyKind::Coupled, real, fake, 0.01, rng, 1.0);
    EXPECT_EQ(at0.images.value().data()[17], real.images.value().data()[17]);
    EXPECT_TRUE(std::equal(at0.labels.value().data().begin(), at0.labels.value().data().end(),
                           real.labels.value().data().begin()));
    EXPECT_TRUE(std::equal(at1.images.value().data().begin(), at1.images.value().data().end(),
                           fake.images.value().data().begin()));
    const auto local = sample_penalty_points(PenaltyKind::Local, real, fake, 0.0, rng);
    EXPECT_TRUE(std::equal(local.images.value().data().begin(), local.images.value().data().end(),
                           real.images.value().data().begin()));
    const auto r2 = sample_penalty_points(PenaltyKind::R2, real, fake, 0.01, rng);
    EXPECT_TRUE(std::equal(r2.labels.value().data().begin(), r2.labels.value().data().end(),
                           fake.labels.value().data().begin()));
    EXPECT_THROW(sample_penalty_points(PenaltyKind::Coupled, real, random_pairs(4, 2), 0.01, rng), ShapeError);
}

TEST(PenaltyPoints, CoupledInterpolatesPerSample)
{
    const PairBatch real = random_pairs(64, 1), fake = random_pairs(64, 2);
    std::mt19937_64 rng(4);
    const auto mid = sample_penalty_points(PenaltyKind::Coupled, real, fake, 0.01, rng);
    for (std::size_t i = 0; i < 64; ++i) {
        const std::size_t j = i * kPixels + 100;
        const double r = real.images.value()[j], f = fake.images.value()[j], m = mid.images.value()[j];
        EXPECT_GE(m, std::min(r, f) - 1e-12);
        EXPECT_LE(m, std::max(r, f) + 1e-12);
    }
}

TEST(Penalty, LinearCriticExamples)
{
    const PairBatch points = random_pairs(6, 5);
    PenaltySpec spec;
    spec.kind = PenaltyKind::Coupled;
    EXPECT_NEAR(penalty_term(spec, linear_critic(1.0), points).value().item(), 0.0, 1e-10);
    EXPECT_NEAR(penalty_term(spec, linear_critic(3.0), points).value().item(), 40.0, 1e-9);
    spec.side = PenaltySide::OneSide;
    spec.k = 4.0;
    EXPECT_NEAR(penalty_term(spec, linear_critic(3.0), points).value().item(), 0.0, 1e-12);
    spec.one_side_form = OneSideForm::RawMax;
    EXPECT_NEAR(penalty_term(spec, linear_critic(3.0), points).value().item(), 40.0, 1e-9);
    spec.kind = PenaltyKind::R1;
    EXPECT_NEAR(penalty_term(spec, linear_critic(3.0), points).value().item(), 90.0, 1e-9);
}

TEST(Penalty, SpecValidation)
{
    PenaltySpec spec;
    spec.lambda = -1.0;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = {};
    spec.k = 0.0;
    EXPECT_THROW(spec.validate(), ConfigError);
    spec = {};
    spec.c = 0.0;
    EXPECT_THROW(spec.validate(), ConfigError);
}

TEST(Penalty, DecreasesMonotonicallyOnSmoothCritic)
{
    // Two-layer softplus critic on the full pair, fixed sample points.
    std::mt19937_64 rng(21);
    std::normal_distribution<double> normal(0.0, 0.05);
    Tensor t1(Shape{kPixels + kNumClasses, 16}), t2(Shape{16, 1});
    for (double& v : t1.data()) v = normal(rng);
    for (double& v : t2.data()) v = 20.0 * normal(rng);
    const Var w1 = parameter(t1), b1 = parameter(Tensor(Shape{16}, 0.0)), w2 = parameter(t2),
              b2 = parameter(Tensor(Shape{1}, 0.0));
    const Critic critic = [&](const Var& img, const Var& lab) {
        const Var flat = concat({reshape(img, {img.shape()[0], kPixels}), lab}, 1);
        return dense(softplus(dense(flat, w1, b1)), w2, b2);
    };
    const PairBatch points = random_pairs(8, 6);
    PenaltySpec spec;
    spec.kind = PenaltyKind::Coupled;
    spec.lambda = 100.0;
    std::vector<Var> params{w1, b1, w2, b2};
    const double start = penalty_term(spec, critic, points).value().item();
    double previous = start;
    for (int step = 0; step < 50; ++step) {
        const auto grads = grad(penalty_term(spec, critic, points), params);
        for (std::size_t i = 0; i < params.size(); ++i) {
            double* w = params[i].mutable_value().raw();
            for (std::size_t j = 0; j < params[i].size(); ++j) w[j] -= 1e-4 * grads[i].value()[j];
        }
        const double value = penalty_term(spec, critic, points).value().item();
        ASSERT_LT(value, previous) << "step " << step;
        previous = value;
    }
    EXPECT_LT(previous, 0.5 * start);
}

TEST(Penalty, AdamReducesPenaltyOnDiscriminator)
{
    Discriminator d(11, false);
    const PairBatch points = random_pairs(8, 6);
    PenaltySpec spec;
    spec.kind = PenaltyKind::Coupled;
    spec.lambda = 100.0;
    const Critic critic = [&](const Var& x, const Var& y) { return d.forward(x, y); };
    std::vector<Var> params;
    for (auto& p : d.parameters()) params.push_back(p.var);
    Adam adam(0.001, 0.0, 0.9, 1e-8);
    const double start = penalty_term(spec, critic, points).value().item();
    for (int step = 0; step < 50; ++step) adam.step(d.parameters(), grad(penalty_term(spec, critic, points), params));
    EXPECT_LT(penalty_term(spec, critic, points).value().item(), 0.1 * start);
}

TEST(Regularizers, NamesRoundTrip)
{
    ASSERT_EQ(regularizer_names().size(), 14u);
    for (const auto& name : regularizer_names()) EXPECT_EQ(regularizer_name(parse_regularizer(name)), name);
    const Regularizer r = parse_regularizer("sn+olgp");
    EXPECT_TRUE(r.spectral_norm);
    EXPECT_EQ(r.penalty.kind, PenaltyKind::Local);
    EXPECT_EQ(r.penalty.side, PenaltySide::OneSide);
    EXPECT_THROW(parse_regularizer("wgan"), ConfigError);
}

TEST(Adam, FirstStepMovesByAlpha)
{
    std::vector<NamedParam> params{{"w", parameter(Tensor::from({1.0, -2.0}))}};
    Adam adam(0.1, 0.0, 0.9, 1e-12);
    adam.step(params, {constant(Tensor::from({5.0, -0.01}))});
    EXPECT_NEAR(params[0].var.value()[0], 0.9, 1e-9);
    EXPECT_NEAR(params[0].var.value()[1], -1.9, 1e-9);
}

TEST(Config, JsonRoundTripAndHash)
{
    DanConfig c;
    c.loss = "hinge";
    c.generator = GeneratorVariant::Linear;
    c.epsilon = 1.1;
    c.penalty.kind = PenaltyKind::Local;
    c.penalty.side = PenaltySide::OneSide;
    c.spectral_norm = true;
    c.optimizer.beta1_g = -0.5;
    c.dataset = DatasetVariant::VeryImbalanced;
    c.train_subset = 10000;
    c.seed = 42;
    const DanConfig back = config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_EQ(config_hash(c).size(), 16u);
    DanConfig other = c;
    other.seed = 43;
    EXPECT_NE(config_hash(other), config_hash(c));
    EXPECT_THROW(config_from_json(nlohmann::json{{"lr", 0.1}}), ConfigError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"loss", "no_such_loss"}}), ConfigError);
    const DanConfig shorthand = config_from_json(nlohmann::json{{"regularizer", "sn+tcgp"}});
    EXPECT_TRUE(shorthand.spectral_norm);
    EXPECT_EQ(shorthand.penalty.kind, PenaltyKind::Coupled);
}

TEST(Config, Validation)
{
    DanConfig c;
    c.batch = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.optimizer.beta1_d = 0.95;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.epsilon = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunFiles, WriteReadRoundTrip)
{
    RunRecord r;
    r.series = {{10, 0.5}, {20, 0.25}};
    r.initial_error = 0.9;
    r.final_error = 0.25;
    r.config_hash = "0123456789abcdef";
    r.fault_step = 17;
    r.fault_message = "non-finite";
    EXPECT_EQ(series_csv(r), "step,error\n10,0.5\n20,0.25\n");
    const auto dir = std::filesystem::temp_directory_path() / "advloss_run_rt";
    std::filesystem::create_directories(dir);
    write_run(r, DanConfig{}, dir, "x");
    EXPECT_EQ(read_run(dir, "x"), r);
}

TEST(Evaluate, UniformAndNanGeneratorsPredictZero)
{
    const Dataset test = toy_digits(3, 1);
    Generator g(1);
    auto state = g.state();
    for (auto& t : state)
        if (t.name == "g.dense2.w" || t.name == "g.dense2.b") t.tensor.fill(0.0);
    g.load_state(state);
    EXPECT_NEAR(evaluate(g, test), 0.9, 1e-12);
    for (auto& t : state)
        if (t.name == "g.dense2.w") t.tensor.fill(NAN);
    g.load_state(state);
    EXPECT_NEAR(evaluate(g, test), 0.9, 1e-12);
}

TEST(Train, ZeroStepsGivesEmptySeries)
{
    const Dataset data = toy_digits(4, 2);
    DanConfig c = tiny_config();
    c.steps = 0;
    const RunRecord r = train(c, data, data);
    EXPECT_TRUE(r.series.empty());
    EXPECT_EQ(r.final_error, r.initial_error);
}

TEST(Train, SeedDeterminism)
{
    const Dataset data = toy_digits(4, 2);
    DanConfig c = tiny_config();
    c.penalty.kind = PenaltyKind::Coupled;
    const RunRecord a = train(c, data, data), b = train(c, data, data);
    EXPECT_EQ(a, b);
    ASSERT_EQ(a.series.size(), 2u);
    EXPECT_EQ(a.series[1].step, 20u);
    for (const auto& p : a.series) {
        EXPECT_GE(p.error, 0.0);
        EXPECT_LE(p.error, 1.0);
    }
}

TEST(Train, SpectralNormAndRelativisticRun)
{
    const Dataset data = toy_digits(4, 3);
    DanConfig c = tiny_config();
    c.spectral_norm = true;
    c.loss = "relativistic_hinge";
    const RunRecord r = train(c, data, data);
    EXPECT_EQ(r.series.size(), 2u);
    EXPECT_FALSE(r.fault_step.has_value());
}

TEST(Train, DivergenceIsRecordedNotThrown)
{
    const Dataset data = toy_digits(4, 3);
    DanConfig c = tiny_config();
    c.steps = 40;
    c.optimizer.alpha = 1e200;
    const RunRecord r = train(c, data, data);
    ASSERT_TRUE(r.fault_step.has_value());
    EXPECT_EQ(r.series.size(), 4u);
    EXPECT_EQ(r.series.back().step, 40u);
}

TEST(Train, SupervisedSanityOnMnist)
{
    const auto dir = data_dir_from_env();
    if (!mnist_available(dir)) GTEST_SKIP() << "MNIST not available; set ADVLOSS_DATA_DIR";
    const Dataset train_set = subset(load_mnist_train(dir), 10000, 1);
    const Dataset test = load_mnist_test(dir);
    Generator g(5);
    Adam adam(0.001, 0.9, 0.999, 1e-8);
    std::vector<Var> params;
    for (auto& p : g.parameters()) params.push_back(p.var);
    std::vector<std::size_t> idx(64);
    std::mt19937_64 rng(9);
    for (int step = 0; step < 400; ++step) {
        for (auto& i : idx) i = rng() % train_set.size();
        const PairBatch b = make_batch(train_set, idx);
        const Var probs = g.forward(b.images, true);
        const Var ce = scale(sum(mul(b.labels, log(add_scalar(probs, 1e-12)))), -1.0 / 64.0);
        adam.step(g.parameters(), grad(ce, params));
    }
    EXPECT_LT(evaluate(g, test), 0.10);
}
