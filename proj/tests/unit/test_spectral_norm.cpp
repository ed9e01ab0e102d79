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

#include "advloss/errors.hpp"
#include "advloss/spectral_norm.hpp"
#include "gradcheck.hpp"

#include <Eigen/SVD>
#include <gtest/gtest.h>

using namespace advloss;

namespace {

double top_singular_value(const Tensor& w)
{
    Eigen::MatrixXd m(w.dim(0), w.dim(1));
    for (std::size_t r = 0; r < w.dim(0); ++r)
        for (std::size_t c = 0; c < w.dim(1); ++c) m(r, c) = w[r * w.dim(1) + c];
    return Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
}

} // namespace

TEST(SpectralNorm, Diagonal)
{
    Tensor w({2, 2}, std::vector<double>{3, 0, 0, 1});
    auto state = PowerIteration::for_columns(2);
    const Tensor n = spectral_normalize(w, state, 20);
    EXPECT_NEAR(top_singular_value(n), 1.0, 1e-3);
}

TEST(SpectralNorm, IdentityUnchanged)
{
    Tensor w({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto state = PowerIteration::for_columns(3);
    const Tensor n = spectral_normalize(w, state, 20);
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(n[i], w[i], 1e-12);
}

TEST(SpectralNorm, RandomSquare)
{
    std::mt19937_64 rng(11);
    const Tensor w = advloss::testing::random_tensor({8, 8}, rng);
    auto state = PowerIteration::for_columns(8);
    EXPECT_NEAR(top_singular_value(spectral_normalize(w, state, 20)), 1.0, 1e-3);
}

TEST(SpectralNorm, ZeroMatrixLeavesStateAlone)
{
    Tensor w({3, 4}, 0.0);
    auto state = PowerIteration::for_columns(4);
    const auto before = state.u;
    const Tensor n = spectral_normalize(w, state, 20);
    for (double v : n.data()) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(state.u, before);
    const Var nv = spectral_normalize(parameter(w), state, 1);
    for (double v : nv.value().data()) EXPECT_EQ(v, 0.0);
}

TEST(SpectralNorm, StatePersistsAcrossCalls)
{
    std::mt19937_64 rng(3);
    const Tensor w = advloss::testing::random_tensor({16, 10}, rng);
    auto state = PowerIteration::for_columns(10);
    for (int step = 0; step < 40; ++step) power_iterate(w, state, 1);
    EXPECT_NEAR(power_iterate(w, state, 1), top_singular_value(w), 1e-6 * top_singular_value(w));
}

TEST(SpectralNorm, RejectsNonMatrixAndWrongState)
{
    auto state = PowerIteration::for_columns(3);
    EXPECT_THROW(spectral_normalize(Tensor({3}), state, 1), ShapeError);
    EXPECT_THROW(spectral_normalize(Tensor({2, 4}), state, 1), ShapeError);
}
