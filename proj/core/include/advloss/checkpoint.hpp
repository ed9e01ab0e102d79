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

// Parameter checkpoints: a flat list of (name, shape, data) records.
//
// Layout, all integers and doubles little-endian:
//   magic "ADVLCKPT" (8 bytes), u32 version (= 1), u64 record count,
//   per record: u32 name length, name bytes (UTF-8), u32 rank,
//               u64 dims[rank], f64 data[product(dims)].

#include "advloss/tensor.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace advloss {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& records);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

} // namespace advloss
