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

// Finite-difference checks of every layer, first and second order.

#include "advloss/dantest.hpp"
#include "advloss/nn_models.hpp"
#include "advloss/ops.hpp"
#include "advloss/spectral_norm.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

using namespace advloss;
using advloss::testing::check_gradients;
using advloss::testing::random_tensor;

namespace {

constexpr double kFirstOrder = 1e-4;
constexpr double kSecondOrder = 1e-3;

// Weighted sum so that every output entry gets a distinct cotangent.
Var probe(const Var& y, std::uint64_t seed = 99)
{
    std::mt19937_64 rng(seed);
    return sum(mul(y, constant(random_tensor(y.shape(), rng))));
}

// Values bounded away from zero, for kinked or singular ops.
Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng)
{
    Tensor t = random_tensor(shape, rng, 0.2, 1.5);
    std::bernoulli_distribution flip(0.5);
    for (double& v : t.data())
        if (flip(rng)) v = -v;
    return t;
}

} // namespace

class GradCheckTest : public ::testing::Test {
protected:
    std::mt19937_64 rng{2024};
    Var param(const Shape& s, double lo = -1.0, double hi = 1.0)
    {
        return parameter(random_tensor(s, rng, lo, hi));
    }
};

TEST_F(GradCheckTest, BroadcastingBinaryOps)
{
    const Var a = param({3, 4});
    const Var b = param({4}, 0.5, 1.5);
    const Var c = param({3, 1});
    for (auto op : {add, sub, mul, div}) {
        const auto r = check_gradients([&] { return probe(op(op(a, b), add_scalar(c, 2.0))); }, {a, b, c});
        EXPECT_LT(r.max_error, kFirstOrder);
    }
}

TEST_F(GradCheckTest, UnaryOps)
{
    const Var x = param({5}, 0.3, 2.0);
    const Var s = parameter(away_from_zero({6}, rng));
    EXPECT_LT(check_gradients([&] { return probe(exp(x)); }, {x}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(log(x)); }, {x}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(sqrt(x)); }, {x}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(pow(x, 2.5)); }, {x}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(safe_reciprocal(x)); }, {x}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(softplus(s)); }, {s}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(sigmoid(s)); }, {s}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(relu(s)); }, {s}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(abs(s)); }, {s}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(neg(scale(square(s), 0.3))); }, {s}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, Reductions)
{
    const Var x = param({2, 3, 4});
    EXPECT_LT(check_gradients([&] { return mean(square(x)); }, {x}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(sum_to(x, {1, 3, 1})); }, {x}).max_error, kFirstOrder);
    const Var b = param({3, 1});
    EXPECT_LT(check_gradients([&] { return probe(broadcast_to(b, {2, 3, 4})); }, {b}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(reshape(x, {6, 4})); }, {x}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, Matmul)
{
    const Var a = param({3, 4});
    const Var b = param({4, 5});
    const Var at = param({4, 3});
    const Var bt = param({5, 4});
    EXPECT_LT(check_gradients([&] { return probe(matmul(a, b)); }, {a, b}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(matmul(at, b, true, false)); }, {at, b}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(matmul(a, bt, false, true)); }, {a, bt}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, Convolution)
{
    const Var x = param({2, 7, 7, 3});
    const Var k = param({3 * 3 * 3, 4});
    const Var bias = param({4});
    for (auto pad : {Padding::Valid, Padding::Same})
        for (std::size_t stride : {1u, 2u, 3u}) {
            const auto r = check_gradients([&] { return probe(conv2d(x, k, bias, 3, 3, stride, pad)); }, {x, k, bias});
            EXPECT_LT(r.max_error, kFirstOrder) << "stride " << stride;
        }
}

TEST_F(GradCheckTest, MaxPool)
{
    // Distinct values so no ties sit within the probe step.
    Tensor t({2, 4, 4, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::sin(1.7 * i) * 3.0;
    const Var x = parameter(t);
    EXPECT_LT(check_gradients([&] { return probe(maxpool2d(x, 2, 2)); }, {x}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, ConcatAndSlice)
{
    const Var a = param({2, 3, 2});
    const Var b = param({2, 1, 2});
    EXPECT_LT(check_gradients([&] { return probe(concat({a, b, a}, 1)); }, {a, b}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(slice(a, 1, 1, 3)); }, {a}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(concat({a, a}, 2)); }, {a}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, SoftmaxDenseNorms)
{
    const Var x = param({4, 6});
    const Var w = param({6, 3});
    const Var b = param({3});
    EXPECT_LT(check_gradients([&] { return probe(softmax(x)); }, {x}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(dense(x, w, b)); }, {x, w, b}).max_error, kFirstOrder);
    EXPECT_LT(check_gradients([&] { return probe(l2_norm(x)); }, {x}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, LayerNorm)
{
    const Var x = param({3, 2, 2, 4});
    const Var g = param({4}, 0.5, 1.5);
    const Var s = param({4});
    EXPECT_LT(check_gradients([&] { return probe(layer_norm(x, g, s)); }, {x, g, s}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, BatchNormTrainAndEval)
{
    const Var x = param({5, 2, 2, 3});
    const Var g = param({3}, 0.5, 1.5);
    const Var s = param({3});
    EXPECT_LT(check_gradients([&] { return probe(batch_norm_train(x, g, s).output); }, {x, g, s}).max_error,
              kFirstOrder);
    const Tensor m = Tensor::from({0.1, -0.2, 0.3});
    const Tensor v = Tensor::from({1.5, 0.7, 2.0});
    EXPECT_LT(check_gradients([&] { return probe(batch_norm_eval(x, g, s, m, v)); }, {x, g, s}).max_error,
              kFirstOrder);
}

TEST_F(GradCheckTest, SpectralNormalizedWeight)
{
    const Var w = param({6, 4});
    PowerIteration state = PowerIteration::for_columns(4);
    power_iterate(w.value(), state, 50);
    // Zero iterations keep u fixed so repeated evaluations see the same estimate.
    EXPECT_LT(check_gradients([&] { return probe(spectral_normalize(w, state, 0)); }, {w}).max_error, kFirstOrder);
}

TEST_F(GradCheckTest, ThreeLayerDenseNetwork)
{
    const Var x = constant(random_tensor({8, 5}, rng));
    const Var w1 = param({5, 7}), b1 = param({7}), w2 = param({7, 6}), b2 = param({6}), w3 = param({6, 3}),
              b3 = param({3});
    auto net = [&] {
        Var h = softplus(dense(x, w1, b1));
        h = sigmoid(dense(h, w2, b2));
        return mean(square(dense(h, w3, b3)));
    };
    const auto r = check_gradients(net, {w1, b1, w2, b2, w3, b3});
    EXPECT_LT(r.max_error, kFirstOrder);
    EXPECT_EQ(r.checked, 5u * 7 + 7 + 7 * 6 + 6 + 6 * 3 + 3);
}

TEST_F(GradCheckTest, GeneratorAllLayers)
{
    Generator g(5);
    const Var x = constant(random_tensor({6, 28, 28, 1}, rng, 0.0, 1.0));
    std::vector<Var> ps;
    for (auto& p : g.parameters()) ps.push_back(p.var);
    const auto r = check_gradients([&] { return probe(g.forward(x, true)); }, ps, 1e-5, 12);
    EXPECT_LT(r.max_error, kFirstOrder);
}

TEST_F(GradCheckTest, DiscriminatorAllLayers)
{
    for (bool sn : {false, true}) {
        Discriminator d(6, sn);
        const Var x = parameter(random_tensor({4, 28, 28, 1}, rng, 0.0, 1.0));
        const Var y = parameter(random_tensor({4, 10}, rng, 0.0, 1.0));
        std::vector<Var> ps{x, y};
        for (auto& p : d.parameters()) ps.push_back(p.var);
        const auto r = check_gradients(
            [&] {
                d.prepare(false);
                return probe(d.forward(x, y));
            },
            ps, 1e-5, 12);
        EXPECT_LT(r.max_error, kFirstOrder) << "spectral norm " << sn;
    }
}

// Second order: grad_theta |grad_x D|^2 against differences of |grad_x D|^2.
TEST_F(GradCheckTest, DoubleBackpropSmallNetwork)
{
    const Var w1 = param({4, 6}), b1 = param({6}), w2 = param({6, 1}), b2 = param({1});
    const Tensor x0 = random_tensor({5, 4}, rng);
    auto penalty = [&] {
        const Var x = parameter(x0);
        const Var score = dense(softplus(dense(x, w1, b1)), w2, b2);
        const auto gx = grad(sum(score), {x}, true);
        return mean(square(l2_norm(gx[0])));
    };
    EXPECT_LT(check_gradients(penalty, {w1, b1, w2, b2}).max_error, kSecondOrder);
}

TEST_F(GradCheckTest, DoubleBackpropThroughPenaltyTerm)
{
    // Two-layer critic on the (image, label) pair.
    const Var w1 = param({784 + 10, 8}), b1 = param({8}), w2 = param({8, 1}), b2 = param({1});
    const Critic critic = [&](const Var& img, const Var& lab) {
        const Var flat = concat({reshape(img, {img.shape()[0], 784}), lab}, 1);
        return dense(softplus(dense(flat, w1, b1)), w2, b2);
    };
    PairBatch points{constant(random_tensor({3, 28, 28, 1}, rng, 0.0, 1.0)),
                     constant(random_tensor({3, 10}, rng, 0.0, 1.0))};
    for (auto kind : {PenaltyKind::Coupled, PenaltyKind::R1}) {
        for (auto side : {PenaltySide::TwoSide, PenaltySide::OneSide}) {
            PenaltySpec spec;
            spec.kind = kind;
            spec.side = side;
            spec.k = 0.05;
            const auto r = check_gradients([&] { return penalty_term(spec, critic, points); }, {w1, b1, w2, b2},
                                           1e-5, 40);
            EXPECT_LT(r.max_error, kSecondOrder);
        }
    }
}

TEST_F(GradCheckTest, DoubleBackpropFullDiscriminator)
{
    for (bool sn : {false, true}) {
        Discriminator d(8, sn);
        const Critic critic = [&](const Var& x, const Var& y) { return d.forward(x, y); };
        PairBatch points{constant(random_tensor({3, 28, 28, 1}, rng, 0.0, 1.0)),
                         constant(random_tensor({3, 10}, rng, 0.0, 1.0))};
        PenaltySpec spec;
        spec.kind = PenaltyKind::Coupled;
        std::vector<Var> ps;
        for (auto& p : d.parameters()) ps.push_back(p.var);
        const auto r = check_gradients(
            [&] {
                d.prepare(false);
                return penalty_term(spec, critic, points);
            },
            ps, 1e-5, 6);
        EXPECT_LT(r.max_error, kSecondOrder) << "spectral norm " << sn;
    }
}
