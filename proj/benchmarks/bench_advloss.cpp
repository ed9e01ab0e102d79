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
#include "advloss/landscape.hpp"
#include "advloss/validity.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace advloss;

namespace {

Tensor uniform(const Shape& shape, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor t(shape);
    for (double& v : t.data()) v = u(rng);
    return t;
}

Dataset noise_digits(std::size_t n)
{
    Dataset d;
    const Tensor pixels = uniform({n * kPixels}, 1);
    d.images.assign(pixels.data().begin(), pixels.data().end());
    for (std::size_t i = 0; i < n; ++i) d.labels.push_back(static_cast<std::uint8_t>(i % 10));
    return d;
}

void BM_PsiSmall(benchmark::State& state)
{
    const auto loss = get_loss("least_squares");
    double g = 0.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(psi_small(loss, g));
        g = g < 0.99 ? g + 0.01 : 0.0;
    }
}
BENCHMARK(BM_PsiSmall);

void BM_Classify(benchmark::State& state)
{
    ValidityConfig config;
    config.gamma_intervals = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(classify(get_loss("hinge"), config));
}
BENCHMARK(BM_Classify)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_Conv2dForwardBackward(benchmark::State& state)
{
    const Var x = parameter(uniform({64, 28, 28, 11}, 2));
    const Var k = parameter(uniform({99, 32}, 3));
    const Var b = parameter(uniform({32}, 4));
    for (auto _ : state) {
        const Var y = conv2d(x, k, b, 3, 3, 3, Padding::Same);
        benchmark::DoNotOptimize(grad(sum(y), {x, k, b}));
    }
}
BENCHMARK(BM_Conv2dForwardBackward)->Unit(benchmark::kMillisecond);

void BM_GeneratorForward(benchmark::State& state)
{
    Generator g(1);
    const Var images = constant(uniform({64, 28, 28, 1}, 5));
    for (auto _ : state) benchmark::DoNotOptimize(g.forward(images, false));
}
BENCHMARK(BM_GeneratorForward)->Unit(benchmark::kMillisecond);

void BM_PenaltyTerm(benchmark::State& state)
{
    Discriminator d(2, false);
    d.prepare(false);
    const Critic critic = [&](const Var& x, const Var& y) { return d.forward(x, y); };
    const PairBatch points{constant(uniform({64, 28, 28, 1}, 6)), constant(uniform({64, 10}, 7))};
    PenaltySpec spec;
    spec.kind = PenaltyKind::Coupled;
    std::vector<Var> params;
    for (auto& p : d.parameters()) params.push_back(p.var);
    for (auto _ : state) benchmark::DoNotOptimize(grad(penalty_term(spec, critic, points), params));
}
BENCHMARK(BM_PenaltyTerm)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state)
{
    const Dataset data = noise_digits(640);
    DanConfig config;
    config.steps = 10;
    config.eval_every = 10;
    config.penalty.kind = state.range(0) ? PenaltyKind::Coupled : PenaltyKind::None;
    for (auto _ : state) benchmark::DoNotOptimize(train(config, data, noise_digits(10)));
    state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
