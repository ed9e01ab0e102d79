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

#include "advloss/nn_models.hpp"

#include "advloss/errors.hpp"

#include <cmath>
#include <map>

namespace advloss {

namespace {

constexpr std::size_t kKernel = 3;
constexpr std::size_t kStride = 3;
constexpr std::size_t kConv1 = 32;
constexpr std::size_t kConv2 = 64;
constexpr std::size_t kDense1 = 128;
constexpr std::size_t kFlat = 2 * 2 * kConv2;

Var zeros(std::size_t n) { return parameter(Tensor({n}, 0.0)); }
Var ones(std::size_t n) { return parameter(Tensor({n}, 1.0)); }

Var flatten(const Var& x) { return reshape(x, {x.shape()[0], x.size() / x.shape()[0]}); }

std::size_t count(const std::vector<NamedParam>& params)
{
    std::size_t n = 0;
    for (const auto& p : params) n += p.var.size();
    return n;
}

void restore(std::vector<NamedParam>& params, std::map<std::string, const Tensor*>& lookup)
{
    for (auto& p : params) {
        auto it = lookup.find(p.name);
        if (it == lookup.end()) throw FormatError("checkpoint lacks " + p.name);
        if (it->second->shape() != p.var.shape())
            throw FormatError("checkpoint shape mismatch for " + p.name + ": " + to_string(it->second->shape()));
        p.var.mutable_value() = *it->second;
    }
}

std::map<std::string, const Tensor*> index_records(const std::vector<NamedTensor>& records)
{
    std::map<std::string, const Tensor*> lookup;
    for (const auto& r : records) lookup[r.name] = &r.tensor;
    return lookup;
}

} // namespace

std::vector<LayerSpec> trunk_layers(std::size_t output_units)
{
    return {{LayerKind::Conv, kConv1, kKernel, kStride},
            {LayerKind::Conv, kConv2, kKernel, kStride},
            {LayerKind::MaxPool, 0, 2, 2},
            {LayerKind::Dense, kDense1, 0, 0},
            {LayerKind::Dense, output_units, 0, 0}};
}

Tensor he_uniform(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng)
{
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t({fan_in, fan_out});
    for (double& v : t.data()) v = dist(rng);
    return t;
}

Var label_planes(const Var& labels, std::size_t h, std::size_t w)
{
    const std::size_t n = labels.shape()[0], k = labels.shape()[1];
    return broadcast_to(reshape(labels, {n, 1, 1, k}), {n, h, w, k});
}

// ---------------------------------------------------------------- generator

Generator::Generator(std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    conv1_w_ = parameter(he_uniform(kKernel * kKernel * 1, kConv1, rng));
    conv1_b_ = zeros(kConv1);
    conv2_w_ = parameter(he_uniform(kKernel * kKernel * kConv1, kConv2, rng));
    conv2_b_ = zeros(kConv2);
    dense1_w_ = parameter(he_uniform(kFlat, kDense1, rng));
    dense1_b_ = zeros(kDense1);
    dense2_w_ = parameter(he_uniform(kDense1, kNumClasses, rng));
    dense2_b_ = zeros(kNumClasses);
    auto make_bn = [](std::size_t c) {
        return BatchNorm{ones(c), zeros(c), Tensor({c}, 0.0), Tensor({c}, 1.0)};
    };
    bn1_ = make_bn(kConv1);
    bn2_ = make_bn(kConv2);
    bn3_ = make_bn(kDense1);
    params_ = {{"g.conv1.w", conv1_w_},   {"g.conv1.b", conv1_b_},   {"g.bn1.gain", bn1_.gain},
               {"g.bn1.shift", bn1_.shift}, {"g.conv2.w", conv2_w_},   {"g.conv2.b", conv2_b_},
               {"g.bn2.gain", bn2_.gain}, {"g.bn2.shift", bn2_.shift}, {"g.dense1.w", dense1_w_},
               {"g.dense1.b", dense1_b_}, {"g.bn3.gain", bn3_.gain}, {"g.bn3.shift", bn3_.shift},
               {"g.dense2.w", dense2_w_}, {"g.dense2.b", dense2_b_}};
}

Var Generator::normalize(BatchNorm& bn, const Var& x, bool training)
{
    if (!training) return batch_norm_eval(x, bn.gain, bn.shift, bn.running_mean, bn.running_var);
    BatchNormResult r = batch_norm_train(x, bn.gain, bn.shift);
    for (std::size_t c = 0; c < bn.running_mean.size(); ++c) {
        bn.running_mean[c] = kMomentum * bn.running_mean[c] + (1.0 - kMomentum) * r.batch_mean[c];
        bn.running_var[c] = kMomentum * bn.running_var[c] + (1.0 - kMomentum) * r.batch_var[c];
    }
    return r.output;
}

Var Generator::forward(const Var& images, bool training)
{
    if (images.value().rank() != 4 || images.shape()[3] != 1)
        throw ShapeError("generator expects (batch, 28, 28, 1), got " + to_string(images.shape()));
    Var h = conv2d(images, conv1_w_, conv1_b_, kKernel, kKernel, kStride, Padding::Same);
    h = relu(normalize(bn1_, h, training));
    h = conv2d(h, conv2_w_, conv2_b_, kKernel, kKernel, kStride, Padding::Same);
    h = relu(normalize(bn2_, h, training));
    h = flatten(maxpool2d(h, 2, 2));
    h = relu(normalize(bn3_, dense(h, dense1_w_, dense1_b_), training));
    return softmax(dense(h, dense2_w_, dense2_b_));
}

std::size_t Generator::parameter_count() const { return count(params_); }

std::vector<NamedTensor> Generator::state() const
{
    std::vector<NamedTensor> out;
    for (const auto& p : params_) out.push_back({p.name, p.var.value()});
    const BatchNorm* bns[] = {&bn1_, &bn2_, &bn3_};
    for (int i = 0; i < 3; ++i) {
        const std::string stem = "g.bn" + std::to_string(i + 1);
        out.push_back({stem + ".running_mean", bns[i]->running_mean});
        out.push_back({stem + ".running_var", bns[i]->running_var});
    }
    return out;
}

void Generator::load_state(const std::vector<NamedTensor>& records)
{
    auto lookup = index_records(records);
    restore(params_, lookup);
    BatchNorm* bns[] = {&bn1_, &bn2_, &bn3_};
    for (int i = 0; i < 3; ++i) {
        const std::string stem = "g.bn" + std::to_string(i + 1);
        for (auto [suffix, target] : {std::pair{".running_mean", &bns[i]->running_mean},
                                      std::pair{".running_var", &bns[i]->running_var}}) {
            auto it = lookup.find(stem + suffix);
            if (it == lookup.end() || it->second->shape() != target->shape())
                throw FormatError("checkpoint lacks a valid " + stem + suffix);
            *target = *it->second;
        }
    }
}

// ---------------------------------------------------------------- discriminator

Discriminator::Discriminator(std::uint64_t seed, bool spectral_norm) : spectral_norm_(spectral_norm)
{
    std::mt19937_64 rng(seed);
    conv1_w_ = parameter(he_uniform(kKernel * kKernel * (1 + kNumClasses), kConv1, rng));
    conv1_b_ = zeros(kConv1);
    conv2_w_ = parameter(he_uniform(kKernel * kKernel * (kConv1 + kNumClasses), kConv2, rng));
    conv2_b_ = zeros(kConv2);
    dense1_w_ = parameter(he_uniform(kFlat + kNumClasses, kDense1, rng));
    dense1_b_ = zeros(kDense1);
    dense2_w_ = parameter(he_uniform(kDense1 + kNumClasses, 1, rng));
    dense2_b_ = zeros(1);
    params_ = {{"d.conv1.w", conv1_w_}, {"d.conv1.b", conv1_b_}, {"d.conv2.w", conv2_w_},
               {"d.conv2.b", conv2_b_}, {"d.dense1.w", dense1_w_}, {"d.dense1.b", dense1_b_},
               {"d.dense2.w", dense2_w_}, {"d.dense2.b", dense2_b_}};
    if (!spectral_norm_) {
        ln1_g_ = ones(kConv1), ln1_b_ = zeros(kConv1);
        ln2_g_ = ones(kConv2), ln2_b_ = zeros(kConv2);
        ln3_g_ = ones(kDense1), ln3_b_ = zeros(kDense1);
        params_.insert(params_.end(), {{"d.ln1.gain", ln1_g_}, {"d.ln1.shift", ln1_b_}, {"d.ln2.gain", ln2_g_},
                                       {"d.ln2.shift", ln2_b_}, {"d.ln3.gain", ln3_g_}, {"d.ln3.shift", ln3_b_}});
    } else {
        for (const Var* w : {&conv1_w_, &conv2_w_, &dense1_w_, &dense2_w_}) {
            power_.push_back(PowerIteration::for_columns(w->shape()[1]));
            power_iterate(w->value(), power_.back(), kWarmupIterations);
        }
    }
    prepare(false);
}

Var Discriminator::effective(std::size_t layer, bool advance)
{
    const Var* raw[] = {&conv1_w_, &conv2_w_, &dense1_w_, &dense2_w_};
    const Var& w = *raw[layer];
    if (!spectral_norm_) return w;
    return spectral_normalize(w, power_[layer], advance ? 1 : 0);
}

void Discriminator::prepare(bool advance)
{
    weights_.clear();
    for (std::size_t i = 0; i < 4; ++i) weights_.push_back(effective(i, advance));
}

Var Discriminator::forward(const Var& images, const Var& labels)
{
    if (images.value().rank() != 4 || images.shape()[3] != 1)
        throw ShapeError("discriminator expects (batch, 28, 28, 1), got " + to_string(images.shape()));
    if (labels.value().rank() != 2 || labels.shape()[0] != images.shape()[0] || labels.shape()[1] != kNumClasses)
        throw ShapeError("discriminator labels must be (batch, 10), got " + to_string(labels.shape()));
    auto with_label = [&](const Var& h) {
        if (h.value().rank() == 4) return concat({h, label_planes(labels, h.shape()[1], h.shape()[2])}, 3);
        return concat({h, labels}, 1);
    };
    auto norm = [&](const Var& h, const Var& gain, const Var& shift) {
        return spectral_norm_ ? h : layer_norm(h, gain, shift);
    };
    Var h = conv2d(with_label(images), weights_[0], conv1_b_, kKernel, kKernel, kStride, Padding::Same);
    h = relu(norm(h, ln1_g_, ln1_b_));
    h = conv2d(with_label(h), weights_[1], conv2_b_, kKernel, kKernel, kStride, Padding::Same);
    h = relu(norm(h, ln2_g_, ln2_b_));
    h = flatten(maxpool2d(h, 2, 2));
    h = relu(norm(dense(with_label(h), weights_[2], dense1_b_), ln3_g_, ln3_b_));
    return dense(with_label(h), weights_[3], dense2_b_);
}

std::size_t Discriminator::parameter_count() const { return count(params_); }

std::vector<Tensor> Discriminator::effective_weights() const
{
    std::vector<Tensor> out;
    for (const auto& w : weights_) out.push_back(w.value());
    return out;
}

std::vector<NamedTensor> Discriminator::state() const
{
    std::vector<NamedTensor> out;
    for (const auto& p : params_) out.push_back({p.name, p.var.value()});
    for (std::size_t i = 0; i < power_.size(); ++i)
        out.push_back({"d.sn" + std::to_string(i + 1) + ".u", Tensor({power_[i].u.size()}, power_[i].u)});
    return out;
}

void Discriminator::load_state(const std::vector<NamedTensor>& records)
{
    auto lookup = index_records(records);
    restore(params_, lookup);
    for (std::size_t i = 0; i < power_.size(); ++i) {
        const std::string name = "d.sn" + std::to_string(i + 1) + ".u";
        auto it = lookup.find(name);
        if (it == lookup.end() || it->second->size() != power_[i].u.size())
            throw FormatError("checkpoint lacks a valid " + name);
        auto span = it->second->data();
        power_[i].u.assign(span.begin(), span.end());
    }
    prepare(false);
}

} // namespace advloss
