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
#include "advloss/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace advloss;

TEST(Tensor, DefaultIsScalarZero)
{
    Tensor t;
    EXPECT_EQ(t.rank(), 0u);
    EXPECT_EQ(t.size(), 1u);
    EXPECT_EQ(t.item(), 0.0);
}

TEST(Tensor, ShapeAndFill)
{
    Tensor t({2, 3}, 1.5);
    EXPECT_EQ(t.size(), 6u);
    EXPECT_EQ(t.dim(1), 3u);
    for (double v : t.data()) EXPECT_EQ(v, 1.5);
    EXPECT_EQ(to_string(t.shape()), "(2, 3)");
}

TEST(Tensor, DataLengthMustMatchShape)
{
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(Tensor, ReshapeKeepsData)
{
    Tensor t({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
    Tensor r = t.reshaped({3, 2});
    EXPECT_EQ(r.shape(), (Shape{3, 2}));
    EXPECT_EQ(r[5], 6.0);
    EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Tensor, ItemNeedsOneElement)
{
    EXPECT_THROW(Tensor({2}).item(), ShapeError);
}

TEST(Tensor, FiniteCheck)
{
    Tensor t = Tensor::from({1.0, 2.0});
    EXPECT_TRUE(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(t.all_finite());
    t[1] = std::numeric_limits<double>::infinity();
    EXPECT_FALSE(t.all_finite());
}
