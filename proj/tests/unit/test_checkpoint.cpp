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

#include "advloss/checkpoint.hpp"
#include "advloss/errors.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace advloss;

namespace {

std::filesystem::path temp_path(const std::string& name)
{
    return std::filesystem::temp_directory_path() / ("advloss_test_" + name);
}

} // namespace

TEST(Checkpoint, RoundTrip)
{
    const auto path = temp_path("roundtrip.ckpt");
    std::vector<NamedTensor> records{{"a", Tensor({2, 3}, std::vector<double>{1, 2, 3, 4, 5, -6.25})},
                                     {"scalar", Tensor::scalar(3.5)},
                                     {"empty.name.ok", Tensor({0})}};
    save_checkpoint(path, records);
    const auto back = load_checkpoint(path);
    ASSERT_EQ(back.size(), records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        EXPECT_EQ(back[i].name, records[i].name);
        EXPECT_EQ(back[i].tensor.shape(), records[i].tensor.shape());
        for (std::size_t j = 0; j < records[i].tensor.size(); ++j)
            EXPECT_EQ(back[i].tensor[j], records[i].tensor[j]);
    }
    std::filesystem::remove(path);
}

TEST(Checkpoint, LittleEndianLayout)
{
    const auto path = temp_path("layout.ckpt");
    save_checkpoint(path, {{"w", Tensor::from({1.0})}});
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), {}};
    // magic(8) version(4) count(8) namelen(4) name(1) rank(4) dim(8) data(8)
    ASSERT_EQ(bytes.size(), 8u + 4 + 8 + 4 + 1 + 4 + 8 + 8);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), "ADVLCKPT");
    EXPECT_EQ(bytes[8], 1);
    EXPECT_EQ(bytes[12], 1);
    EXPECT_EQ(bytes[24], 'w');
    EXPECT_EQ(bytes.back(), 0x3f); // 1.0 = 0x3ff0000000000000, high byte last
    std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileIsFormatError)
{
    const auto path = temp_path("trunc.ckpt");
    save_checkpoint(path, {{"w", Tensor({4}, 2.0)}});
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    EXPECT_THROW(load_checkpoint(path), FormatError);
    std::filesystem::remove(path);
}

TEST(Checkpoint, BadMagicAndMissingFile)
{
    const auto path = temp_path("magic.ckpt");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOTACKPT and more bytes";
    }
    EXPECT_THROW(load_checkpoint(path), FormatError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(temp_path("does_not_exist.ckpt")), IoError);
}
