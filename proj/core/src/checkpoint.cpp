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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace advloss {

namespace {

constexpr std::array<char, 8> kMagic{'A', 'D', 'V', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value)
{
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

void put_double(std::ostream& out, double value) { put(out, std::bit_cast<std::uint64_t>(value)); }

template <typename T>
T get(std::istream& in)
{
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        const int c = in.get();
        if (c == std::char_traits<char>::eof()) throw FormatError("checkpoint truncated");
        value |= static_cast<T>(static_cast<unsigned char>(c)) << (8 * i);
    }
    return value;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(out, kVersion);
    put<std::uint64_t>(out, records.size());
    for (const auto& r : records) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
        out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(r.tensor.rank()));
        for (auto d : r.tensor.shape()) put<std::uint64_t>(out, d);
        for (double v : r.tensor.data()) put_double(out, v);
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw FormatError("not a checkpoint file: " + path.string());
    if (get<std::uint32_t>(in) != kVersion) throw FormatError("unsupported checkpoint version");
    const auto count = get<std::uint64_t>(in);
    std::vector<NamedTensor> records;
    for (std::uint64_t i = 0; i < count; ++i) {
        NamedTensor r;
        r.name.resize(get<std::uint32_t>(in));
        in.read(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        if (!in) throw FormatError("checkpoint truncated");
        Shape shape(get<std::uint32_t>(in));
        for (auto& d : shape) d = get<std::uint64_t>(in);
        std::vector<double> data(numel(shape));
        for (auto& v : data) v = std::bit_cast<double>(get<std::uint64_t>(in));
        r.tensor = Tensor(std::move(shape), std::move(data));
        records.push_back(std::move(r));
    }
    return records;
}

} // namespace advloss
