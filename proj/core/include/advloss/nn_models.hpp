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

// Generator and discriminator of the DAN setup. Images are NHWC
// (batch, 28, 28, 1); labels are (batch, 10) one-hot or soft vectors.
//
// Spatial plan with 3x3 kernels, stride 3 and "same" zero padding:
//   28x28 -> conv -> 10x10 -> conv -> 4x4 -> maxpool 2x2 -> 2x2 (256 features)
//
// The discriminator appends the label to the input of every layer: as 10
// constant channels in front of a convolution and as a plain vector in
// front of a dense layer.

#include "advloss/checkpoint.hpp"
#include "advloss/ops.hpp"
#include "advloss/spectral_norm.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace advloss {

inline constexpr std::size_t kImageSide = 28;
inline constexpr std::size_t kNumClasses = 10;

struct NamedParam {
    std::string name;
    Var var;
};

enum class LayerKind { Conv, MaxPool, Dense };

struct LayerSpec {
    LayerKind kind;
    std::size_t width = 0;  // filters or dense units
    std::size_t kernel = 0; // conv kernel or pool size
    std::size_t stride = 0;
};

/// Shared trunk of both networks; the last layer is 10 units for G and 1 for D.
std::vector<LayerSpec> trunk_layers(std::size_t output_units);

class Generator {
public:
    explicit Generator(std::uint64_t seed);

    /// Class probabilities (batch, 10). Training mode normalizes with batch
    /// statistics and updates the running averages.
    Var forward(const Var& images, bool training);

    std::vector<NamedParam>& parameters() { return params_; }
    std::size_t parameter_count() const;

    /// Parameters followed by running statistics.
    std::vector<NamedTensor> state() const;
    void load_state(const std::vector<NamedTensor>& records);

    static constexpr double kMomentum = 0.99;

private:
    struct BatchNorm {
        Var gain, shift;
        Tensor running_mean, running_var;
    };
    Var normalize(BatchNorm& bn, const Var& x, bool training);

    Var conv1_w_, conv1_b_, conv2_w_, conv2_b_, dense1_w_, dense1_b_, dense2_w_, dense2_b_;
    BatchNorm bn1_, bn2_, bn3_;
    std::vector<NamedParam> params_;
};

class Discriminator {
public:
    Discriminator(std::uint64_t seed, bool spectral_norm);

    /// Recomputes the effective weights for the current parameter values.
    /// With spectral normalization, `advance` runs one power iteration per
    /// matrix first; otherwise the stored estimates are reused.
    void prepare(bool advance);

    /// Scores (batch, 1). Uses the weights of the last prepare() call.
    Var forward(const Var& images, const Var& labels);

    bool spectral_norm() const noexcept { return spectral_norm_; }
    std::vector<NamedParam>& parameters() { return params_; }
    std::size_t parameter_count() const;

    /// Effective weight matrices of the last prepare() call, one per layer.
    std::vector<Tensor> effective_weights() const;

    std::vector<NamedTensor> state() const;
    void load_state(const std::vector<NamedTensor>& records);

    /// Power iterations run on the initial weights; the singular value
    /// gaps of random matrices are small, so a single step per update
    /// would take hundreds of updates to settle.
    static constexpr int kWarmupIterations = 200;

private:
    Var effective(std::size_t layer, bool advance);

    bool spectral_norm_;
    Var conv1_w_, conv1_b_, conv2_w_, conv2_b_, dense1_w_, dense1_b_, dense2_w_, dense2_b_;
    Var ln1_g_, ln1_b_, ln2_g_, ln2_b_, ln3_g_, ln3_b_;
    std::vector<PowerIteration> power_;
    std::vector<Var> weights_;
    std::vector<NamedParam> params_;
};

/// Weight tensor of shape (fan_in, fan_out) drawn from U(-sqrt(6/fan_in), sqrt(6/fan_in)).
Tensor he_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Label tensor (batch, 10) broadcast to (batch, h, w, 10).
Var label_planes(const Var& labels, std::size_t h, std::size_t w);

} // namespace advloss
