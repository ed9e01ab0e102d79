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

#include "advloss/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace advloss {

namespace {

std::uint64_t splitmix(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

const std::vector<std::pair<PenaltyKind, const char*>> kKindNames = {
    {PenaltyKind::None, "none"}, {PenaltyKind::Coupled, "coupled"}, {PenaltyKind::Local, "local"},
    {PenaltyKind::R1, "r1"},     {PenaltyKind::R2, "r2"}};

std::string kind_name(PenaltyKind k)
{
    for (auto& [kind, name] : kKindNames)
        if (kind == k) return name;
    return "?";
}

PenaltyKind parse_kind(const std::string& s)
{
    for (auto& [kind, name] : kKindNames)
        if (s == name) return kind;
    throw ConfigError("unknown penalty kind: " + s);
}

bool grads_finite(const std::vector<Var>& grads)
{
    for (const auto& g : grads)
        if (!g.value().all_finite()) return false;
    return true;
}

std::vector<Var> vars_of(std::vector<NamedParam>& params)
{
    std::vector<Var> out;
    out.reserve(params.size());
    for (auto& p : params) out.push_back(p.var);
    return out;
}

Var rows_squared_norm(const Var& flat)
{
    return reshape(sum_to(square(flat), {flat.shape()[0], 1}), {flat.shape()[0]});
}

Tensor mix(const Tensor& a, const Tensor& b, const std::vector<double>& u)
{
    Tensor out(a.shape());
    const std::size_t per = a.size() / u.size();
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < per; ++j) {
            const std::size_t k = i * per + j;
            out[k] = (1.0 - u[i]) * a[k] + u[i] * b[k];
        }
    return out;
}

} // namespace

// ---------------------------------------------------------------- penalty specs

void PenaltySpec::validate() const
{
    if (!(lambda >= 0.0)) throw ConfigError("penalty lambda must be >= 0");
    if (!(k > 0.0)) throw ConfigError("penalty k must be > 0");
    if (!(c > 0.0)) throw ConfigError("penalty c must be > 0");
}

Regularizer parse_regularizer(std::string_view name)
{
    std::string s(name);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
    Regularizer r;
    if (s.rfind("sn", 0) == 0) {
        r.spectral_norm = true;
        s = s.substr(2);
        if (s.empty()) return r;
        if (s[0] != '+') throw ConfigError("unknown regularizer: " + std::string(name));
        s = s.substr(1);
    }
    if (s == "none" || s == "unregularized") {
        if (r.spectral_norm) throw ConfigError("unknown regularizer: " + std::string(name));
        return r;
    }
    if (s == "r1" || s == "r2") {
        r.penalty.kind = s == "r1" ? PenaltyKind::R1 : PenaltyKind::R2;
        return r;
    }
    if (s.size() == 4 && s.substr(2) == "gp" && (s[0] == 't' || s[0] == 'o') && (s[1] == 'c' || s[1] == 'l')) {
        r.penalty.side = s[0] == 't' ? PenaltySide::TwoSide : PenaltySide::OneSide;
        r.penalty.kind = s[1] == 'c' ? PenaltyKind::Coupled : PenaltyKind::Local;
        return r;
    }
    throw ConfigError("unknown regularizer: " + std::string(name));
}

std::string regularizer_name(const Regularizer& r)
{
    std::string p;
    switch (r.penalty.kind) {
    case PenaltyKind::None: break;
    case PenaltyKind::R1: p = "r1"; break;
    case PenaltyKind::R2: p = "r2"; break;
    case PenaltyKind::Coupled:
    case PenaltyKind::Local:
        p = std::string(r.penalty.side == PenaltySide::TwoSide ? "t" : "o") +
            (r.penalty.kind == PenaltyKind::Coupled ? "c" : "l") + "gp";
        break;
    }
    if (r.spectral_norm) return p.empty() ? "sn" : "sn+" + p;
    return p.empty() ? "none" : p;
}

const std::vector<std::string>& regularizer_names()
{
    static const std::vector<std::string> names = {"none",    "tcgp",    "ocgp",    "tlgp",    "olgp",
                                                   "r1",      "r2",      "sn",      "sn+tcgp", "sn+ocgp",
                                                   "sn+tlgp", "sn+olgp", "sn+r1",   "sn+r2"};
    return names;
}

// ---------------------------------------------------------------- config

void DanConfig::validate() const
{
    if (batch == 0) throw ConfigError("batch must be > 0");
    if (eval_every == 0) throw ConfigError("eval_every must be > 0");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    for (double b : {optimizer.beta1_g, optimizer.beta1_d})
        if (b < -0.5 || b > 0.9) throw ConfigError("beta1 must lie in [-0.5, 0.9]");
    if (!(optimizer.beta2 > 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
    if (!(optimizer.alpha > 0.0)) throw ConfigError("alpha must be > 0");
    penalty.validate();
    try {
        resolve_loss();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
}

ComponentLoss DanConfig::resolve_loss() const
{
    ComponentLoss l = get_loss(loss);
    if (generator) l = with_generator(l, *generator);
    if (epsilon != 1.0) l = epsilon_weighted(l, epsilon);
    return l;
}

nlohmann::json to_json(const DanConfig& c)
{
    return {
        {"loss", c.loss},
        {"generator", c.generator ? nlohmann::json(std::string(to_string(*c.generator))) : nlohmann::json(nullptr)},
        {"epsilon", c.epsilon},
        {"penalty",
         {{"kind", kind_name(c.penalty.kind)},
          {"side", c.penalty.side == PenaltySide::TwoSide ? "two_side" : "one_side"},
          {"lambda", c.penalty.lambda},
          {"k", c.penalty.k},
          {"c", c.penalty.c},
          {"one_side_form", c.penalty.one_side_form == OneSideForm::SquaredHinge ? "squared_hinge" : "raw_max"}}},
        {"spectral_norm", c.spectral_norm},
        {"optimizer",
         {{"alpha", c.optimizer.alpha},
          {"beta1_g", c.optimizer.beta1_g},
          {"beta1_d", c.optimizer.beta1_d},
          {"beta2", c.optimizer.beta2},
          {"eps", c.optimizer.eps}}},
        {"batch", c.batch},
        {"steps", c.steps},
        {"eval_every", c.eval_every},
        {"dataset", std::string(to_string(c.dataset))},
        {"dataset_seed", c.dataset_seed},
        {"train_subset", c.train_subset},
        {"subset_seed", c.subset_seed},
        {"seed", c.seed},
    };
}

DanConfig config_from_json(const nlohmann::json& j, DanConfig c)
{
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            const auto& v = it.value();
            if (key == "loss") c.loss = v.get<std::string>();
            else if (key == "generator") {
                if (v.is_null()) c.generator.reset();
                else c.generator = parse_generator_variant(v.get<std::string>());
            } else if (key == "epsilon") c.epsilon = v.get<double>();
            else if (key == "regularizer") {
                const Regularizer r = parse_regularizer(v.get<std::string>());
                const PenaltySpec old = c.penalty;
                c.penalty = r.penalty;
                c.penalty.lambda = old.lambda, c.penalty.k = old.k, c.penalty.c = old.c;
                c.penalty.one_side_form = old.one_side_form;
                c.spectral_norm = r.spectral_norm;
            } else if (key == "penalty") {
                for (auto p = v.begin(); p != v.end(); ++p) {
                    if (p.key() == "kind") c.penalty.kind = parse_kind(p.value().get<std::string>());
                    else if (p.key() == "side") {
                        const auto s = p.value().get<std::string>();
                        if (s != "two_side" && s != "one_side") throw ConfigError("unknown penalty side: " + s);
                        c.penalty.side = s == "two_side" ? PenaltySide::TwoSide : PenaltySide::OneSide;
                    } else if (p.key() == "lambda") c.penalty.lambda = p.value().get<double>();
                    else if (p.key() == "k") c.penalty.k = p.value().get<double>();
                    else if (p.key() == "c") c.penalty.c = p.value().get<double>();
                    else if (p.key() == "one_side_form") {
                        const auto s = p.value().get<std::string>();
                        if (s != "squared_hinge" && s != "raw_max") throw ConfigError("unknown one_side_form: " + s);
                        c.penalty.one_side_form = s == "squared_hinge" ? OneSideForm::SquaredHinge : OneSideForm::RawMax;
                    } else throw ConfigError("unknown penalty key: " + p.key());
                }
            } else if (key == "spectral_norm") c.spectral_norm = v.get<bool>();
            else if (key == "optimizer") {
                for (auto p = v.begin(); p != v.end(); ++p) {
                    if (p.key() == "alpha") c.optimizer.alpha = p.value().get<double>();
                    else if (p.key() == "beta1_g") c.optimizer.beta1_g = p.value().get<double>();
                    else if (p.key() == "beta1_d") c.optimizer.beta1_d = p.value().get<double>();
                    else if (p.key() == "beta2") c.optimizer.beta2 = p.value().get<double>();
                    else if (p.key() == "eps") c.optimizer.eps = p.value().get<double>();
                    else throw ConfigError("unknown optimizer key: " + p.key());
                }
            } else if (key == "batch") c.batch = v.get<std::size_t>();
            else if (key == "steps") c.steps = v.get<std::size_t>();
            else if (key == "eval_every") c.eval_every = v.get<std::size_t>();
            else if (key == "dataset") c.dataset = parse_variant(v.get<std::string>());
            else if (key == "dataset_seed") c.dataset_seed = v.get<std::uint64_t>();
            else if (key == "train_subset") c.train_subset = v.get<std::size_t>();
            else if (key == "subset_seed") c.subset_seed = v.get<std::uint64_t>();
            else if (key == "seed") c.seed = v.get<std::uint64_t>();
            else throw ConfigError("unknown config key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    c.validate();
    return c;
}

std::string config_hash(const DanConfig& config)
{
    const std::string text = to_json(config).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- run records

bool RunRecord::operator==(const RunRecord& o) const
{
    if (series.size() != o.series.size()) return false;
    for (std::size_t i = 0; i < series.size(); ++i)
        if (series[i].step != o.series[i].step || series[i].error != o.series[i].error) return false;
    return initial_error == o.initial_error && final_error == o.final_error && config_hash == o.config_hash &&
           fault_step == o.fault_step;
}

std::string series_csv(const RunRecord& record)
{
    std::ostringstream out;
    out << "step,error\n";
    char buf[64];
    for (const auto& p : record.series) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", p.step, p.error);
        out << buf;
    }
    return out.str();
}

nlohmann::json summary_json(const RunRecord& r)
{
    nlohmann::json fault = nullptr;
    if (r.fault_step) fault = {{"step", *r.fault_step}, {"message", r.fault_message}};
    return {{"config_hash", r.config_hash}, {"initial_error", r.initial_error}, {"final_error", r.final_error},
            {"wall_seconds", r.wall_seconds}, {"evaluations", r.series.size()}, {"fault", fault}};
}

void write_run(const RunRecord& record, const DanConfig& config, const std::filesystem::path& dir,
               const std::string& stem)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / (stem + ".csv"));
        if (!out) throw IoError("cannot write " + (dir / (stem + ".csv")).string());
        out << series_csv(record);
    }
    nlohmann::json j = summary_json(record);
    j["config"] = to_json(config);
    // Written last so its presence marks a complete run.
    const auto tmp = dir / (stem + ".json.tmp");
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << j.dump(2) << "\n";
    }
    std::filesystem::rename(tmp, dir / (stem + ".json"));
}

RunRecord read_run(const std::filesystem::path& dir, const std::string& stem)
{
    std::ifstream js(dir / (stem + ".json"));
    if (!js) throw IoError("cannot read " + (dir / (stem + ".json")).string());
    nlohmann::json j;
    try {
        js >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad run summary: ") + e.what());
    }
    RunRecord r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.initial_error = j.at("initial_error").get<double>();
    r.final_error = j.at("final_error").get<double>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    if (!j.at("fault").is_null()) {
        r.fault_step = j["fault"].at("step").get<std::size_t>();
        r.fault_message = j["fault"].at("message").get<std::string>();
    }
    std::ifstream cs(dir / (stem + ".csv"));
    if (!cs) throw IoError("cannot read " + (dir / (stem + ".csv")).string());
    std::string line;
    std::getline(cs, line);
    if (line != "step,error") throw FormatError("bad series header in " + stem + ".csv");
    while (std::getline(cs, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError("bad series row: " + line);
        r.series.push_back({std::stoul(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
    }
    return r;
}

// ---------------------------------------------------------------- objectives

PairBatch make_batch(const Dataset& data, const std::vector<std::size_t>& indices)
{
    const std::size_t n = indices.size();
    Tensor images({n, kImageSide, kImageSide, 1});
    Tensor labels({n, kNumClasses}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(data.image(indices[i]), kPixels, images.raw() + i * kPixels);
        labels[i * kNumClasses + data.labels[indices[i]]] = 1.0;
    }
    return {constant(std::move(images)), constant(std::move(labels))};
}

RelativisticLosses relativistic_scores(bool hinge, const Var& real_scores, const Var& fake_scores)
{
    if (real_scores.size() == 0 || fake_scores.size() == 0) throw InvalidArgument("empty score batch");
    const Var real_c = sub(real_scores, mean(fake_scores));
    const Var fake_c = sub(fake_scores, mean(real_scores));
    // Loss for wanting t large, and for wanting t small.
    auto high = [hinge](const Var& t) { return hinge ? mean(relu(add_scalar(neg(t), 1.0))) : mean(softplus(neg(t))); };
    auto low = [hinge](const Var& t) { return hinge ? mean(relu(add_scalar(t, 1.0))) : mean(softplus(t)); };
    return {add(high(real_c), low(fake_c)), add(high(fake_c), low(real_c))};
}

Var d_loss(const ComponentLoss& loss, const Var& real_scores, const Var& fake_scores)
{
    if (!loss.pointwise())
        return relativistic_scores(loss.family() == LossFamily::Hinge, real_scores, fake_scores).d;
    Var real_term = mean(loss.f(real_scores));
    if (loss.epsilon() != 1.0) real_term = scale(real_term, loss.epsilon());
    return neg(add(real_term, mean(loss.g(fake_scores))));
}

Var g_loss(const ComponentLoss& loss, const Var& real_scores, const Var& fake_scores)
{
    if (!loss.pointwise())
        return relativistic_scores(loss.family() == LossFamily::Hinge, real_scores, fake_scores).g;
    return mean(loss.h(fake_scores));
}

PairBatch sample_penalty_points(PenaltyKind kind, const PairBatch& real, const PairBatch& fake, double c,
                                std::mt19937_64& rng, std::optional<double> forced_u)
{
    if (real.images.shape() != fake.images.shape() || real.labels.shape() != fake.labels.shape())
        throw ShapeError("real and fake batches differ in shape");
    const std::size_t n = real.images.shape()[0];
    switch (kind) {
    case PenaltyKind::None:
    case PenaltyKind::R1: return {real.images.detach(), real.labels.detach()};
    case PenaltyKind::R2: return {fake.images.detach(), fake.labels.detach()};
    case PenaltyKind::Coupled: {
        std::uniform_real_distribution<double> uniform(0.0, 1.0);
        std::vector<double> u(n);
        for (double& x : u) x = forced_u ? *forced_u : uniform(rng);
        return {constant(mix(real.images.value(), fake.images.value(), u)),
                constant(mix(real.labels.value(), fake.labels.value(), u))};
    }
    case PenaltyKind::Local: {
        std::normal_distribution<double> normal(0.0, 1.0);
        Tensor images = real.images.value(), labels = real.labels.value();
        for (double& x : images.data()) x += c * normal(rng);
        for (double& x : labels.data()) x += c * normal(rng);
        return {constant(std::move(images)), constant(std::move(labels))};
    }
    }
    throw InvalidArgument("unknown penalty kind");
}

Var critic_gradient_norm(const Critic& critic, const PairBatch& points, bool squared)
{
    const Var images = parameter(points.images.value());
    const Var labels = parameter(points.labels.value());
    const Var scores = critic(images, labels);
    const auto g = grad(sum(scores), {images, labels}, true);
    const std::size_t n = images.shape()[0];
    const Var flat = concat({reshape(g[0], {n, images.size() / n}), g[1]}, 1);
    return squared ? rows_squared_norm(flat) : l2_norm(flat);
}

Var penalty_term(const PenaltySpec& spec, const Critic& critic, const PairBatch& points)
{
    switch (spec.kind) {
    case PenaltyKind::None: return constant(Tensor::scalar(0.0));
    case PenaltyKind::R1:
    case PenaltyKind::R2: return scale(mean(critic_gradient_norm(critic, points, true)), spec.lambda);
    case PenaltyKind::Coupled:
    case PenaltyKind::Local: break;
    }
    const Var gap = add_scalar(critic_gradient_norm(critic, points), -spec.k);
    Var r;
    if (spec.side == PenaltySide::TwoSide)
        r = square(gap);
    else if (spec.one_side_form == OneSideForm::SquaredHinge)
        r = square(relu(gap));
    else
        r = add_scalar(relu(gap), spec.k); // max(x, k)
    return scale(mean(r), spec.lambda);
}

// ---------------------------------------------------------------- optimizer

Adam::Adam(double alpha, double beta1, double beta2, double eps)
    : alpha_(alpha), beta1_(beta1), beta2_(beta2), eps_(eps)
{
}

void Adam::step(std::vector<NamedParam>& params, const std::vector<Var>& grads)
{
    if (grads.size() != params.size()) throw InvalidArgument("gradient count does not match parameters");
    if (m_.empty())
        for (auto& p : params) {
            m_.emplace_back(p.var.shape(), 0.0);
            v_.emplace_back(p.var.shape(), 0.0);
        }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* w = params[i].var.mutable_value().raw();
        const double* g = grads[i].value().raw();
        double* m = m_[i].raw();
        double* v = v_[i].raw();
        for (std::size_t j = 0; j < m_[i].size(); ++j) {
            m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
            w[j] -= alpha_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

// ---------------------------------------------------------------- training

double evaluate(Generator& generator, const Dataset& test)
{
    if (test.size() == 0) return 0.0;
    NoGradGuard no_grad;
    constexpr std::size_t kChunk = 500;
    std::size_t wrong = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < test.size(); start += kChunk) {
        const std::size_t n = std::min(kChunk, test.size() - start);
        idx.resize(n);
        std::iota(idx.begin(), idx.end(), start);
        const Var probs = generator.forward(make_batch(test, idx).images, false);
        const double* p = probs.value().raw();
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            for (std::size_t k = 1; k < kNumClasses; ++k)
                if (p[i * kNumClasses + k] > p[i * kNumClasses + best]) best = k;
            if (best != test.labels[start + i]) ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(test.size());
}

Dataset prepare_training_set(const DanConfig& config, const Dataset& standard)
{
    Dataset data = make_variant(standard, config.dataset, config.dataset_seed);
    if (config.train_subset > 0) data = subset(data, config.train_subset, config.subset_seed);
    return data;
}

RunRecord train(const DanConfig& config, const Dataset& train_data, const Dataset& test, const Progress& progress,
                TrainedState* final_state)
{
    const auto started = std::chrono::steady_clock::now();
    config.validate();
    if (train_data.size() == 0) throw InvalidArgument("empty training set");
    const ComponentLoss loss = config.resolve_loss();
    const std::size_t batch = config.batch;

    Generator generator(splitmix(config.seed, 1));
    Discriminator discriminator(splitmix(config.seed, 2), config.spectral_norm);
    Adam opt_g(config.optimizer.alpha, config.optimizer.beta1_g, config.optimizer.beta2, config.optimizer.eps);
    Adam opt_d(config.optimizer.alpha, config.optimizer.beta1_d, config.optimizer.beta2, config.optimizer.eps);
    std::mt19937_64 rng(splitmix(config.seed, 3));
    const Critic critic = [&](const Var& x, const Var& y) { return discriminator.forward(x, y); };

    RunRecord record;
    record.config_hash = config_hash(config);
    record.initial_error = evaluate(generator, test);
    record.final_error = record.initial_error;

    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t cursor = order.size();
    std::vector<std::size_t> indices(batch);

    for (std::size_t step = 1; step <= config.steps; ++step) {
        for (auto& i : indices) {
            if (cursor == order.size()) {
                for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng() % k]);
                cursor = 0;
            }
            i = order[cursor++];
        }
        const PairBatch real = make_batch(train_data, indices);
        const Var probs = generator.forward(real.images, true);
        const PairBatch fake{real.images, constant(probs.value())};

        // Discriminator update on real and fake pairs scored together.
        discriminator.prepare(true);
        const Var scores = discriminator.forward(concat({real.images, real.images}, 0),
                                                 concat({real.labels, fake.labels}, 0));
        Var loss_d = d_loss(loss, slice(scores, 0, 0, batch), slice(scores, 0, batch, 2 * batch));
        if (config.penalty.kind != PenaltyKind::None) {
            const PairBatch points = sample_penalty_points(config.penalty.kind, real, fake, config.penalty.c, rng);
            loss_d = add(loss_d, penalty_term(config.penalty, critic, points));
        }
        const auto grads_d = grad(loss_d, vars_of(discriminator.parameters()));
        bool finite = loss_d.value().all_finite() && grads_finite(grads_d);
        opt_d.step(discriminator.parameters(), grads_d);

        // Generator update against the refreshed discriminator.
        discriminator.prepare(false);
        const Var fake_scores = discriminator.forward(real.images, probs);
        Var real_scores;
        if (!loss.pointwise()) {
            NoGradGuard no_grad;
            real_scores = discriminator.forward(real.images, real.labels);
        }
        const Var loss_g = g_loss(loss, real_scores, fake_scores);
        const auto grads_g = grad(loss_g, vars_of(generator.parameters()));
        finite = finite && loss_g.value().all_finite() && grads_finite(grads_g);
        opt_g.step(generator.parameters(), grads_g);

        if (!finite) {
            record.fault_step = step;
            record.fault_message = FaultFlag("non-finite loss or gradient", step).what();
            const double error = evaluate(generator, test);
            for (std::size_t s = config.eval_every; s <= config.steps; s += config.eval_every)
                if (s >= step) record.series.push_back({s, error});
            record.final_error = error;
            if (progress) progress(step, error);
            break;
        }
        if (step % config.eval_every == 0) {
            const double error = evaluate(generator, test);
            record.series.push_back({step, error});
            record.final_error = error;
            if (progress) progress(step, error);
        }
    }
    if (final_state) {
        final_state->generator = generator.state();
        final_state->discriminator = discriminator.state();
    }
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return record;
}

} // namespace advloss
