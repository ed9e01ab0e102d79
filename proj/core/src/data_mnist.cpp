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

#include "advloss/data_mnist.hpp"

#include "advloss/errors.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>

namespace advloss {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::vector<unsigned char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t offset)
{
    if (offset + 4 > bytes.size()) throw FormatError("truncated IDX header");
    return (std::uint32_t(bytes[offset]) << 24) | (std::uint32_t(bytes[offset + 1]) << 16) |
           (std::uint32_t(bytes[offset + 2]) << 8) | std::uint32_t(bytes[offset + 3]);
}

std::vector<std::size_t> permutation(std::size_t n, std::mt19937_64& rng)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Fisher-Yates with an explicit draw so results do not depend on the
    // standard library's shuffle.
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng() % i;
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

void append(Dataset& out, const double* image, std::uint8_t label)
{
    out.images.insert(out.images.end(), image, image + kPixels);
    out.labels.push_back(label);
}

} // namespace

std::string_view to_string(DatasetVariant v)
{
    switch (v) {
    case DatasetVariant::Standard: return "standard";
    case DatasetVariant::Imbalanced: return "imbalanced";
    case DatasetVariant::VeryImbalanced: return "very_imbalanced";
    }
    return "?";
}

DatasetVariant parse_variant(std::string_view name)
{
    for (auto v : {DatasetVariant::Standard, DatasetVariant::Imbalanced, DatasetVariant::VeryImbalanced})
        if (to_string(v) == name) return v;
    throw ConfigError("unknown dataset variant: " + std::string(name));
}

std::size_t Dataset::count(std::uint8_t label) const
{
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path)
{
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);
    if (be32(img, 0) != kImageMagic) throw FormatError(images_path.string() + ": bad image magic");
    if (be32(lab, 0) != kLabelMagic) throw FormatError(labels_path.string() + ": bad label magic");
    const std::size_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
    if (rows != 28 || cols != 28) throw FormatError(images_path.string() + ": images are not 28x28");
    if (be32(lab, 4) != n) throw FormatError("image and label counts differ");
    if (img.size() != 16 + n * kPixels) throw FormatError(images_path.string() + ": size does not match header");
    if (lab.size() != 8 + n) throw FormatError(labels_path.string() + ": size does not match header");

    Dataset d;
    d.images.resize(n * kPixels);
    for (std::size_t i = 0; i < n * kPixels; ++i) d.images[i] = img[16 + i] / 255.0;
    d.labels.assign(lab.begin() + 8, lab.end());
    for (auto l : d.labels)
        if (l > 9) throw FormatError(labels_path.string() + ": label out of range");
    return d;
}

Dataset load_mnist_train(const std::filesystem::path& dir)
{
    return load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
}

Dataset load_mnist_test(const std::filesystem::path& dir)
{
    return load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
}

std::filesystem::path data_dir_from_env()
{
    const char* v = std::getenv("ADVLOSS_DATA_DIR");
    return v ? std::filesystem::path(v) : std::filesystem::path();
}

bool mnist_available(const std::filesystem::path& dir)
{
    if (dir.empty()) return false;
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                          "t10k-labels-idx1-ubyte"})
        if (!std::filesystem::exists(dir / f)) return false;
    return true;
}

std::vector<double> shift_image(const double* image, int dx, int dy)
{
    if (std::abs(dx) > 2 || std::abs(dy) > 2) throw InvalidArgument("shifts are limited to 2 pixels");
    std::vector<double> out(kPixels, 0.0);
    for (int r = 0; r < 28; ++r) {
        const int sr = r - dy;
        if (sr < 0 || sr >= 28) continue;
        for (int c = 0; c < 28; ++c) {
            const int sc = c - dx;
            if (sc >= 0 && sc < 28) out[r * 28 + c] = image[sr * 28 + sc];
        }
    }
    return out;
}

std::vector<std::pair<int, int>> augmentation_shifts(DatasetVariant variant)
{
    switch (variant) {
    case DatasetVariant::Standard: return {};
    case DatasetVariant::Imbalanced: return {{0, -1}, {0, 1}, {-1, 0}, {1, 0}};
    case DatasetVariant::VeryImbalanced: return {{0, -1}, {0, 1}, {-1, 0}, {1, 0}, {-2, 0}, {2, 0}};
    }
    return {};
}

Dataset make_variant(const Dataset& standard, DatasetVariant variant, std::uint64_t seed)
{
    if (variant == DatasetVariant::Standard) return standard;
    const auto shifts = augmentation_shifts(variant);
    const std::size_t total = standard.size();
    const std::size_t zeros = standard.count(0);
    const std::size_t new_zeros = zeros * (1 + shifts.size());
    if (new_zeros > total) throw InvalidArgument("too many zeros to keep the dataset size");

    std::vector<std::vector<std::size_t>> by_digit(10);
    for (std::size_t i = 0; i < standard.size(); ++i) by_digit[standard.labels[i]].push_back(i);
    const std::size_t others = total - zeros;
    const std::size_t keep_total = total - new_zeros;

    // Largest-remainder apportionment of the kept slots across digits 1-9.
    std::vector<std::size_t> keep(10, 0);
    std::vector<std::pair<double, int>> remainders;
    std::size_t assigned = 0;
    for (int d = 1; d < 10; ++d) {
        const double exact = static_cast<double>(keep_total) * by_digit[d].size() / others;
        keep[d] = static_cast<std::size_t>(exact);
        assigned += keep[d];
        remainders.push_back({exact - keep[d], d});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < keep_total; ++i, ++assigned) ++keep[remainders[i % 9].second];

    std::mt19937_64 rng(seed);
    std::vector<char> selected(standard.size(), 0);
    for (int d = 1; d < 10; ++d) {
        const auto order = permutation(by_digit[d].size(), rng);
        for (std::size_t i = 0; i < keep[d]; ++i) selected[by_digit[d][order[i]]] = 1;
    }

    Dataset out;
    out.variant = variant;
    out.images.reserve(total * kPixels);
    out.labels.reserve(total);
    for (std::size_t i = 0; i < standard.size(); ++i) {
        if (standard.labels[i] == 0) {
            append(out, standard.image(i), 0);
            for (auto [dx, dy] : shifts) append(out, shift_image(standard.image(i), dx, dy).data(), 0);
        } else if (selected[i]) {
            append(out, standard.image(i), standard.labels[i]);
        }
    }
    return out;
}

Dataset subset(const Dataset& data, std::size_t n, std::uint64_t seed)
{
    if (n >= data.size()) return data;
    std::mt19937_64 rng(seed);
    auto order = permutation(data.size(), rng);
    order.resize(n);
    std::sort(order.begin(), order.end());
    Dataset out;
    out.variant = data.variant;
    for (std::size_t i : order) append(out, data.image(i), data.labels[i]);
    return out;
}

} // namespace advloss
