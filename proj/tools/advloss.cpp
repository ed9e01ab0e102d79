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

// advloss: landscape export, validity checks and DANTest experiments.

#include "advloss/checkpoint.hpp"
#include "advloss/errors.hpp"
#include "advloss/experiments.hpp"
#include "advloss/landscape.hpp"
#include "advloss/validity.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <optional>

using namespace advloss;
namespace fs = std::filesystem;

namespace {

constexpr const char* kDataEnv = "ADVLOSS_DATA_DIR";

nlohmann::json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

fs::path resolve_data_dir(const std::string& flag)
{
    fs::path dir = flag.empty() ? data_dir_from_env() : fs::path(flag);
    if (dir.empty()) throw ConfigError(std::string("no data directory: pass --data or set ") + kDataEnv);
    if (!mnist_available(dir)) throw IoError("MNIST IDX files not found in " + dir.string());
    return dir;
}

ComponentLoss loss_with_epsilon(const std::string& name, double epsilon)
{
    ComponentLoss loss = get_loss(name);
    return epsilon == 1.0 ? loss : epsilon_weighted(loss, epsilon);
}

struct CommonOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string preset;
    std::string data;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_config = true)
{
    if (with_config) cmd->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--preset", o.preset, "Scale preset")->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--data", o.data, std::string("MNIST directory (default: $") + kDataEnv + ")");
}

int run_landscape(const std::vector<std::string>& losses, double epsilon, std::size_t intervals,
                  std::size_t y_points, std::optional<double> y_lo, std::optional<double> y_hi, const std::string& out)
{
    const fs::path dir = out.empty() ? fs::path("landscape") : fs::path(out);
    const auto gammas = uniform_grid(intervals);
    for (const auto& name : losses) {
        const ComponentLoss loss = loss_with_epsilon(name, epsilon);
        auto [lo, hi] = default_y_range(loss);
        if (y_lo) lo = *y_lo;
        if (y_hi) hi = *y_hi;
        const auto ys = linspace(lo, hi, y_points);
        std::string stem = name;
        if (epsilon != 1.0) stem += "_eps" + format_number(epsilon);
        const auto files = export_landscape(loss, gammas, ys, dir, stem);
        std::printf("%s: %s, %s\n", name.c_str(), files.psi_big.string().c_str(), files.psi.string().c_str());
    }
    return 0;
}

int run_validity(const std::string& name, double epsilon, std::size_t intervals, const std::string& out)
{
    const ComponentLoss loss = loss_with_epsilon(name, epsilon);
    ValidityConfig config;
    config.gamma_intervals = intervals;
    const ValidityReport r = classify(loss, config);
    std::printf("loss: %s (epsilon %s)\n", r.loss.c_str(), format_number(r.epsilon).c_str());
    std::printf("necessary condition: %s (strict: %s)\n", r.necessary.pass ? "holds" : "violated",
                r.necessary_strict.pass ? "holds" : "violated");
    std::printf("minimum of psi at gamma = %.6g (%s at 1/2, %s)\n", r.sufficient.min_gamma,
                r.sufficient.global_min_at_half ? "global minimum" : "no global minimum",
                r.sufficient.unique ? "unique" : "not unique");
    if (r.theorem5.y_star)
        std::printf("root y* = %.9g: boundary %s, concavity %s%s\n", *r.theorem5.y_star,
                    r.theorem5.boundary_condition_ok ? "ok" : "fails", r.theorem5.concavity_ok ? "ok" : "fails",
                    r.theorem5.kink_blocked ? ", at a kink" : "");
    else
        std::printf("no root of eps f - g found\n");
    std::printf("verdict: %s\n", std::string(to_string(r.verdict)).c_str());
    const std::string json = to_json(r);
    if (!out.empty()) {
        fs::path path = out;
        if (fs::is_directory(path) || path.extension() != ".json")
            path /= name + (epsilon != 1.0 ? "_eps" + format_number(epsilon) : "") + "_validity.json";
        write_text(path, json + "\n");
        std::printf("report: %s\n", path.string().c_str());
    } else {
        std::printf("%s\n", json.c_str());
    }
    return 0;
}

struct TrainOverrides {
    std::string loss, regularizer, dataset;
    std::optional<double> epsilon;
    std::optional<std::size_t> steps, subset;
};

DanConfig build_config(const CommonOptions& o, const TrainOverrides& t)
{
    DanConfig c;
    if (!o.preset.empty()) apply_preset(c, parse_preset(o.preset));
    if (!o.config.empty()) c = config_from_json(read_json(o.config), c);
    nlohmann::json patch = nlohmann::json::object();
    if (!t.loss.empty()) patch["loss"] = t.loss;
    if (!t.regularizer.empty()) patch["regularizer"] = t.regularizer;
    if (!t.dataset.empty()) patch["dataset"] = t.dataset;
    c = config_from_json(patch, c);
    if (t.epsilon) c.epsilon = *t.epsilon;
    if (t.steps) c.steps = *t.steps;
    if (t.subset) c.train_subset = *t.subset;
    if (o.seed) c.seed = *o.seed;
    c.validate();
    return c;
}

int run_train(const CommonOptions& o, const TrainOverrides& t, bool quiet)
{
    const DanConfig config = build_config(o, t);
    const fs::path data_dir = resolve_data_dir(o.data);
    const Dataset standard = load_mnist_train(data_dir);
    const Dataset test = load_mnist_test(data_dir);
    const Dataset data = prepare_training_set(config, standard);
    const std::string hash = config_hash(config);
    std::fprintf(stderr, "training %s (%s), %zu steps on %zu images\n", config.loss.c_str(), hash.c_str(),
                 config.steps, data.size());
    TrainedState state;
    const RunRecord r = train(
        config, data, test,
        [quiet](std::size_t step, double error) {
            if (!quiet) std::fprintf(stderr, "step %zu error %.4f\n", step, error);
        },
        &state);
    const fs::path out = o.out.empty() ? fs::path("runs") / hash : fs::path(o.out);
    write_run(r, config, out, "run");
    save_checkpoint(out / "generator.ckpt", state.generator);
    save_checkpoint(out / "discriminator.ckpt", state.discriminator);
    std::printf("final error %.4f%s\n", r.final_error,
                r.fault_step ? (" (fault at step " + std::to_string(*r.fault_step) + ")").c_str() : "");
    std::printf("wrote %s\n", out.string().c_str());
    return 0;
}

int run_sweep_cmd(const CommonOptions& o, std::optional<std::size_t> workers, std::optional<std::size_t> runs)
{
    if (o.config.empty()) throw ConfigError("sweep needs --config <sweep.json>");
    DanConfig base;
    const Preset preset = parse_preset(o.preset.empty() ? "desk" : o.preset);
    apply_preset(base, preset);
    if (o.seed) base.seed = *o.seed;
    SweepSpec spec = sweep_from_json(read_json(o.config), base);
    if (!read_json(o.config).contains("runs_per_cell")) spec.runs_per_cell = preset_values(preset).runs_per_cell;
    if (workers) spec.workers = *workers;
    if (runs) spec.runs_per_cell = *runs;
    const fs::path data_dir = resolve_data_dir(o.data);
    const Dataset standard = load_mnist_train(data_dir);
    const Dataset test = load_mnist_test(data_dir);
    const fs::path out = o.out.empty() ? fs::path("sweep") : fs::path(o.out);
    const auto rows = run_sweep(spec, standard, test, out, true);
    std::printf("%zu cells, aggregate at %s\n", rows.size(), (out / "aggregate.csv").string().c_str());
    return 0;
}

std::vector<std::string> unique_in_order(const std::vector<std::string>& values)
{
    std::vector<std::string> out;
    for (const auto& v : values)
        if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
    return out;
}

int run_report(const std::string& in, const std::string& out, bool fractions)
{
    const fs::path dir = in.empty() ? fs::path("sweep") : fs::path(in);
    const fs::path path = fs::is_directory(dir) ? dir / "aggregate.csv" : dir;
    const auto rows = read_aggregate_csv(path);
    std::vector<std::string> losses, regs;
    for (const auto& r : rows) {
        losses.push_back(r.loss);
        regs.push_back(r.regularizer);
    }
    const std::string table = report_table(rows, unique_in_order(losses), unique_in_order(regs), !fractions);
    if (out.empty()) {
        std::cout << table;
    } else {
        write_text(out, table);
        std::printf("wrote %s\n", out.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"advloss: adversarial loss landscapes, validity checks and DANTest experiments"};
    app.require_subcommand(1);

    // landscape
    auto* landscape = app.add_subcommand("landscape", "Export Psi(gamma, y) and psi(gamma) grids as CSV");
    std::vector<std::string> l_losses;
    double l_eps = 1.0;
    std::size_t l_intervals = 100, l_points = 201;
    std::optional<double> l_ylo, l_yhi;
    CommonOptions l_common;
    landscape->add_option("--loss", l_losses, "Loss names (default: the six landscape losses)");
    landscape->add_option("--epsilon", l_eps, "Weight on f")->check(CLI::PositiveNumber);
    landscape->add_option("--gamma-intervals", l_intervals, "Intervals of the gamma grid");
    landscape->add_option("--y-points", l_points, "Points of the y grid");
    landscape->add_option("--y-min", l_ylo, "Lower end of the y grid");
    landscape->add_option("--y-max", l_yhi, "Upper end of the y grid");
    add_common(landscape, l_common, false);

    // validity
    auto* validity = app.add_subcommand("validity", "Classify a loss with the landscape theorems");
    std::string v_loss;
    double v_eps = 1.0;
    std::size_t v_intervals = 1000;
    CommonOptions v_common;
    validity->add_option("--loss", v_loss, "Loss name")->required();
    validity->add_option("--epsilon", v_eps, "Weight on f")->check(CLI::PositiveNumber);
    validity->add_option("--gamma-intervals", v_intervals, "Intervals of the gamma grid");
    add_common(validity, v_common, false);

    // train
    auto* train_cmd = app.add_subcommand("train", "Run one DANTest training run");
    CommonOptions t_common;
    TrainOverrides t_over;
    bool t_quiet = false;
    add_common(train_cmd, t_common);
    train_cmd->add_option("--loss", t_over.loss, "Loss name");
    train_cmd->add_option("--regularizer", t_over.regularizer, "none, tcgp, ocgp, tlgp, olgp, r1, r2, sn, sn+...");
    train_cmd->add_option("--epsilon", t_over.epsilon, "Weight on f");
    train_cmd->add_option("--steps", t_over.steps, "Training steps");
    train_cmd->add_option("--subset", t_over.subset, "Training subset size (0 = all)");
    train_cmd->add_option("--dataset", t_over.dataset, "standard, imbalanced or very_imbalanced");
    train_cmd->add_flag("--quiet", t_quiet, "Do not print evaluations");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Run a resumable grid of training runs");
    CommonOptions s_common;
    std::optional<std::size_t> s_workers, s_runs;
    add_common(sweep, s_common);
    sweep->add_option("--workers", s_workers, "Parallel runs");
    sweep->add_option("--runs", s_runs, "Runs per cell");

    // report
    auto* report = app.add_subcommand("report", "Format an aggregate table with lowest-mean flags");
    std::string r_in, r_out;
    bool r_fractions = false;
    report->add_option("--in", r_in, "Sweep directory or aggregate.csv");
    report->add_option("--out", r_out, "Output CSV (default: stdout)");
    report->add_flag("--fractions", r_fractions, "Report error rates as fractions instead of percent");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*landscape) {
            if (l_losses.empty())
                l_losses = {"classic_minimax", "wasserstein", "least_squares", "hinge_linear", "absolute", "asymmetric"};
            return run_landscape(l_losses, l_eps, l_intervals, l_points, l_ylo, l_yhi, l_common.out);
        }
        if (*validity) return run_validity(v_loss, v_eps, v_intervals, v_common.out);
        if (*train_cmd) return run_train(t_common, t_over, t_quiet);
        if (*sweep) return run_sweep_cmd(s_common, s_workers, s_runs);
        if (*report) return run_report(r_in, r_out, r_fractions);
    } catch (const Error& e) {
        std::fprintf(stderr, "advloss: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "advloss: unexpected error: %s\n", e.what());
        return 1;
    }
    return 0;
}
