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

#include "advloss/experiments.hpp"

#include "advloss/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

namespace advloss {

namespace {

std::string fmt(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string run_stem(const DanConfig& run_config) { return config_hash(run_config); }

template <typename T>
std::vector<T> or_single(const std::vector<T>& axis, T fallback)
{
    return axis.empty() ? std::vector<T>{fallback} : axis;
}

std::vector<std::string> split_csv_line(const std::string& line)
{
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::vector<std::string> names_or_all(const nlohmann::json& v, const std::vector<std::string>& all)
{
    if (v.is_string() && v.get<std::string>() == "all") return all;
    return v.get<std::vector<std::string>>();
}

std::vector<double> numbers_or_paper(const nlohmann::json& v, const std::vector<double>& paper)
{
    if (v.is_string() && v.get<std::string>() == "paper") return paper;
    return v.get<std::vector<double>>();
}

// Datasets shared between workers, built once per distinct recipe.
class DatasetCache {
public:
    DatasetCache(const Dataset& standard) : standard_(standard) {}

    std::shared_ptr<const Dataset> get(const DanConfig& c)
    {
        const std::string key = std::string(to_string(c.dataset)) + "/" + std::to_string(c.dataset_seed) + "/" +
                                std::to_string(c.train_subset) + "/" + std::to_string(c.subset_seed);
        std::lock_guard lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        auto data = std::make_shared<const Dataset>(prepare_training_set(c, standard_));
        cache_[key] = data;
        return data;
    }

private:
    const Dataset& standard_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<const Dataset>> cache_;
};

} // namespace

Preset parse_preset(std::string_view name)
{
    if (name == "desk") return Preset::Desk;
    if (name == "paper") return Preset::Paper;
    throw ConfigError("unknown preset: " + std::string(name));
}

PresetValues preset_values(Preset p)
{
    if (p == Preset::Desk) return {5000, 3, 10000};
    return {100000, 10, 0};
}

void apply_preset(DanConfig& config, Preset p)
{
    const PresetValues v = preset_values(p);
    config.steps = v.steps;
    config.train_subset = v.train_subset;
}

std::vector<double> paper_k_grid() { return {0.01, 0.1, 1.0, 10.0, 100.0}; }
std::vector<double> paper_lambda_grid() { return {0.01, 0.1, 1.0, 10.0, 100.0}; }
std::vector<double> paper_epsilon_grid() { return {0.5, 0.9, 1.0, 1.1, 2.0}; }

std::vector<std::pair<double, double>> paper_beta1_grid()
{
    std::vector<std::pair<double, double>> out;
    for (double g : {-0.5, 0.0, 0.5, 0.9})
        for (double d : {-0.5, 0.0, 0.5, 0.9}) out.push_back({g, d});
    return out;
}

void SweepSpec::validate() const
{
    if (runs_per_cell == 0) throw ConfigError("runs_per_cell must be > 0");
    if (workers == 0) throw ConfigError("workers must be > 0");
    expand_cells(*this);
}

SweepSpec sweep_from_json(const nlohmann::json& j, DanConfig base)
{
    if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
    SweepSpec spec;
    spec.base = base;
    try {
        if (j.contains("base")) spec.base = config_from_json(j["base"], base);
        for (auto it = j.begin(); it != j.end(); ++it) {
            const auto& key = it.key();
            const auto& v = it.value();
            if (key == "base") continue;
            if (key == "losses") spec.losses = names_or_all(v, catalog_names());
            else if (key == "regularizers") spec.regularizers = names_or_all(v, regularizer_names());
            else if (key == "epsilons") spec.epsilons = numbers_or_paper(v, paper_epsilon_grid());
            else if (key == "ks") spec.ks = numbers_or_paper(v, paper_k_grid());
            else if (key == "lambdas") spec.lambdas = numbers_or_paper(v, paper_lambda_grid());
            else if (key == "beta1s") {
                if (v.is_string() && v.get<std::string>() == "paper") spec.beta1s = paper_beta1_grid();
                else
                    for (const auto& p : v) spec.beta1s.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
            } else if (key == "datasets") {
                for (const auto& d : v) spec.datasets.push_back(parse_variant(d.get<std::string>()));
            } else if (key == "runs_per_cell") spec.runs_per_cell = v.get<std::size_t>();
            else if (key == "workers") spec.workers = v.get<std::size_t>();
            else throw ConfigError("unknown sweep key: " + key);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed sweep spec: ") + e.what());
    }
    return spec;
}

std::vector<Cell> expand_cells(const SweepSpec& spec)
{
    const Regularizer base_reg{spec.base.penalty, spec.base.spectral_norm};
    const auto losses = or_single(spec.losses, spec.base.loss);
    const auto regs = or_single(spec.regularizers, regularizer_name(base_reg));
    const auto eps = or_single(spec.epsilons, spec.base.epsilon);
    const auto ks = or_single(spec.ks, spec.base.penalty.k);
    const auto lambdas = or_single(spec.lambdas, spec.base.penalty.lambda);
    const auto betas = or_single(spec.beta1s, {spec.base.optimizer.beta1_g, spec.base.optimizer.beta1_d});
    const auto datasets = or_single(spec.datasets, spec.base.dataset);

    std::vector<Cell> cells;
    for (const auto& loss : losses)
        for (double e : eps)
            for (const auto& reg : regs)
                for (double k : ks)
                    for (double lambda : lambdas)
                        for (const auto& [bg, bd] : betas)
                            for (auto ds : datasets) {
                                Cell cell;
                                DanConfig& c = cell.config;
                                c = spec.base;
                                c.loss = loss;
                                c.epsilon = e;
                                const Regularizer r = parse_regularizer(reg);
                                c.penalty.kind = r.penalty.kind;
                                c.penalty.side = r.penalty.side;
                                c.spectral_norm = r.spectral_norm;
                                c.penalty.k = k;
                                c.penalty.lambda = lambda;
                                c.optimizer.beta1_g = bg;
                                c.optimizer.beta1_d = bd;
                                c.dataset = ds;
                                c.validate();

                                cell.loss_label = loss;
                                if (!spec.epsilons.empty()) cell.loss_label += " eps=" + fmt(e);
                                cell.regularizer_label = reg;
                                if (!spec.ks.empty()) cell.regularizer_label += " k=" + fmt(k);
                                if (!spec.lambdas.empty()) cell.regularizer_label += " lambda=" + fmt(lambda);
                                if (!spec.beta1s.empty())
                                    cell.regularizer_label += " beta1=" + fmt(bg) + "/" + fmt(bd);
                                if (!spec.datasets.empty())
                                    cell.regularizer_label += " " + std::string(to_string(ds));
                                cell.id = cell.loss_label + " | " + cell.regularizer_label;
                                cells.push_back(std::move(cell));
                            }
    return cells;
}

std::pair<double, double> mean_std(const std::vector<double>& values)
{
    if (values.empty()) return {std::nan(""), std::nan("")};
    double m = 0.0;
    for (double v : values) m += v;
    m /= static_cast<double>(values.size());
    if (values.size() < 2) return {m, 0.0};
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return {m, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::vector<CellAggregate> aggregate_runs(const SweepSpec& spec, const std::filesystem::path& out_dir)
{
    std::vector<CellAggregate> rows;
    const auto run_dir = out_dir / "runs";
    for (const auto& cell : expand_cells(spec)) {
        CellAggregate a;
        a.id = cell.id;
        a.loss = cell.loss_label;
        a.regularizer = cell.regularizer_label;
        a.config_hash = config_hash(cell.config);
        std::vector<double> finals;
        for (std::size_t r = 0; r < spec.runs_per_cell; ++r) {
            DanConfig rc = cell.config;
            rc.seed = cell.config.seed + r;
            const std::string stem = run_stem(rc);
            if (!std::filesystem::exists(run_dir / (stem + ".json"))) continue;
            const RunRecord rec = read_run(run_dir, stem);
            finals.push_back(rec.final_error);
            if (rec.fault_step) ++a.faults;
        }
        a.runs = finals.size();
        std::tie(a.mean, a.std) = mean_std(finals);
        rows.push_back(a);
    }
    return rows;
}

std::string aggregate_csv(const std::vector<CellAggregate>& rows)
{
    std::ostringstream out;
    out << "id,loss,regularizer,config_hash,runs,faults,mean,std\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, ",%zu,%zu,%.17g,%.17g\n", r.runs, r.faults, r.mean, r.std);
        out << r.id << "," << r.loss << "," << r.regularizer << "," << r.config_hash << buf;
    }
    return out.str();
}

std::vector<CellAggregate> read_aggregate_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "id,loss,regularizer,config_hash,runs,faults,mean,std")
        throw FormatError(path.string() + ": unexpected header");
    std::vector<CellAggregate> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8) throw FormatError(path.string() + ": bad row: " + line);
        CellAggregate a;
        a.id = f[0], a.loss = f[1], a.regularizer = f[2], a.config_hash = f[3];
        try {
            a.runs = std::stoul(f[4]);
            a.faults = std::stoul(f[5]);
            a.mean = std::stod(f[6]);
            a.std = std::stod(f[7]);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ": bad number in row: " + line);
        }
        rows.push_back(a);
    }
    return rows;
}

std::vector<CellAggregate> run_sweep(const SweepSpec& spec, const Dataset& standard_train, const Dataset& test,
                                     const std::filesystem::path& out_dir, bool verbose)
{
    spec.validate();
    const auto cells = expand_cells(spec);
    const auto run_dir = out_dir / "runs";
    std::filesystem::create_directories(run_dir);

    struct Job {
        DanConfig config;
        std::string label;
    };
    std::vector<Job> jobs;
    for (const auto& cell : cells)
        for (std::size_t r = 0; r < spec.runs_per_cell; ++r) {
            DanConfig rc = cell.config;
            rc.seed = cell.config.seed + r;
            if (std::filesystem::exists(run_dir / (run_stem(rc) + ".json"))) continue;
            jobs.push_back({rc, cell.id + " seed=" + std::to_string(rc.seed)});
        }

    DatasetCache cache(standard_train);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            const Job& job = jobs[i];
            RunRecord rec;
            try {
                rec = train(job.config, *cache.get(job.config), test);
            } catch (const Error& e) {
                // A run that cannot even start is recorded as a faulted run.
                rec.config_hash = config_hash(job.config);
                rec.fault_step = 0;
                rec.fault_message = e.what();
                rec.final_error = 1.0;
            }
            write_run(rec, job.config, run_dir, run_stem(job.config));
            if (verbose) {
                std::lock_guard lock(log_mutex);
                std::fprintf(stderr, "[%zu/%zu] %s -> %.4f%s\n", i + 1, jobs.size(), job.label.c_str(),
                             rec.final_error, rec.fault_step ? " (fault)" : "");
            }
        }
    };
    const std::size_t n_workers = std::min(spec.workers, std::max<std::size_t>(jobs.size(), 1));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    auto rows = aggregate_runs(spec, out_dir);
    std::ofstream out(out_dir / "aggregate.csv");
    if (!out) throw IoError("cannot write " + (out_dir / "aggregate.csv").string());
    out << aggregate_csv(rows);
    return rows;
}

std::vector<double> smooth_series(const std::vector<double>& series)
{
    const std::size_t n = series.size();
    std::vector<double> out(n);
    std::vector<double> window;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t half = std::min<std::size_t>({2, i, n - 1 - i});
        window.assign(series.begin() + (i - half), series.begin() + (i + half + 1));
        std::nth_element(window.begin(), window.begin() + half, window.end());
        out[i] = window[half];
    }
    return out;
}

std::vector<double> smooth_series(const RunRecord& record)
{
    std::vector<double> errors;
    for (const auto& p : record.series) errors.push_back(p.error);
    return smooth_series(errors);
}

std::vector<std::pair<bool, bool>> rank_column(const std::vector<std::optional<double>>& means)
{
    std::vector<double> present;
    for (const auto& m : means)
        if (m) present.push_back(*m);
    std::vector<std::pair<bool, bool>> flags(means.size(), {false, false});
    if (present.empty()) return flags;
    std::sort(present.begin(), present.end());
    const double lowest = present.front();
    const double third = present[std::min<std::size_t>(2, present.size() - 1)];
    for (std::size_t i = 0; i < means.size(); ++i)
        if (means[i]) flags[i] = {*means[i] <= lowest, *means[i] <= third};
    return flags;
}

std::string report_table(const std::vector<CellAggregate>& rows, const std::vector<std::string>& losses,
                         const std::vector<std::string>& regularizers, bool percent)
{
    std::map<std::pair<std::string, std::string>, const CellAggregate*> lookup;
    for (const auto& r : rows) lookup[{r.loss, r.regularizer}] = &r;
    auto find = [&](const std::string& l, const std::string& reg) -> const CellAggregate* {
        auto it = lookup.find({l, reg});
        if (it == lookup.end() || it->second->runs == 0 || !std::isfinite(it->second->mean)) return nullptr;
        return it->second;
    };

    std::vector<std::vector<std::pair<bool, bool>>> flags;
    for (const auto& reg : regularizers) {
        std::vector<std::optional<double>> col;
        for (const auto& l : losses) {
            const auto* a = find(l, reg);
            col.push_back(a ? std::optional<double>(a->mean) : std::nullopt);
        }
        flags.push_back(rank_column(col));
    }

    std::ostringstream out;
    out << "loss";
    for (const auto& reg : regularizers) out << "," << reg << "," << reg << "_lowest," << reg << "_lowest3";
    out << "\n";
    const double unit = percent ? 100.0 : 1.0;
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        out << losses[i];
        for (std::size_t j = 0; j < regularizers.size(); ++j) {
            const auto* a = find(losses[i], regularizers[j]);
            if (a)
                std::snprintf(buf, sizeof buf, "%.2f±%.2f", a->mean * unit, a->std * unit);
            else
                std::snprintf(buf, sizeof buf, "n/a");
            out << "," << buf << "," << int(flags[j][i].first) << "," << int(flags[j][i].second);
        }
        out << "\n";
    }
    return out.str();
}

} // namespace advloss
