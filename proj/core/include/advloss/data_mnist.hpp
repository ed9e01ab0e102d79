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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace advloss {

enum class DatasetVariant { Standard, Imbalanced, VeryImbalanced };

std::string_view to_string(DatasetVariant v);
DatasetVariant parse_variant(std::string_view name);

inline constexpr std::size_t kPixels = 28 * 28;

/// Row-major 28x28 images with pixels in [0, 1].
struct Dataset {
    std::vector<double> images; // size() * 784
    std::vector<std::uint8_t> labels;
    DatasetVariant variant = DatasetVariant::Standard;

    std::size_t size() const noexcept { return labels.size(); }
    const double* image(std::size_t i) const { return images.data() + i * kPixels; }
    std::size_t count(std::uint8_t label) const;
};

/// Parses an IDX image file (magic 2051) and label file (magic 2049).
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Training and test sets from the standard file names in `dir`.
Dataset load_mnist_train(const std::filesystem::path& dir);
Dataset load_mnist_test(const std::filesystem::path& dir);

/// Data directory from ADVLOSS_DATA_DIR, or empty when unset.
std::filesystem::path data_dir_from_env();
bool mnist_available(const std::filesystem::path& dir);

/// Translates by dx columns (positive = right) and dy rows (positive =
/// down), filling vacated pixels with zero. |dx|, |dy| <= 2.
std::vector<double> shift_image(const double* image, int dx, int dy);

/// Shifts used to grow digit 0: up, down, left, right, then for the very
/// imbalanced variant also two pixels left and right.
std::vector<std::pair<int, int>> augmentation_shifts(DatasetVariant variant);

/// Imbalanced: each 0 plus its four one-pixel shifts (5x). VeryImbalanced:
/// additionally the two-pixel horizontal shifts (7x). Digits 1-9 are
/// subsampled uniformly without replacement, proportionally per digit,
/// so the total stays equal to the input size.
Dataset make_variant(const Dataset& standard, DatasetVariant variant, std::uint64_t seed);

/// Seeded uniform subset without replacement; n >= size() returns a copy.
Dataset subset(const Dataset& data, std::size_t n, std::uint64_t seed);

} // namespace advloss
