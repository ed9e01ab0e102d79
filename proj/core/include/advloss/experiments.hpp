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

#include "advloss/dantest.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace advloss {

enum class Preset { Desk, Paper };

Preset parse_preset(std::string_view name);

/// Desk: 5000 steps, 3 runs per cell, 10k-image training subset.
/// Paper: 100000 steps, 10 runs per cell, full training set.
struct PresetValues {
    std::size_t steps;
    std::size_t runs_per_cell;
    std::size_t train_subset;
};
PresetValues preset_values(Preset p);
void apply_preset(DanConfig& config, Preset p);

/// A cartesian grid over the listed axes; empty axes keep the base value.
struct SweepSpec {
    DanConfig base;
    std::vector<std::string> losses;
    std::vector<std::string> regularizers;
    std::vector<double> epsilons;
    std::vector<double> ks;
    std::vector<double> lambdas;
    std::vector<std::pair<double, double>> beta1s; // (beta1_g, beta1_d)
    std::vector<DatasetVariant> datasets;
    std::size_t runs_per_cell = 3;
    std::size_t workers = 1;

    void validate() const;
};

/// Axis values from the experiments: k and lambda grids, the beta1
/// square, the epsilon list and all catalog losses / regularizers.
std::vector<double> paper_k_grid();
std::vector<double> paper_lambda_grid();
std::vector<std::pair<double, double>> paper_beta1_grid();
std::vector<double> paper_epsilon_grid();

SweepSpec sweep_from_json(const nlohmann::json& j, DanConfig base = {});

struct Cell {
    std::string id; // readable label, unique within the sweep
    DanConfig config;
    std::string loss_label;
    std::string regularizer_label;
};

std::vector<Cell> expand_cells(const SweepSpec& spec);

struct CellAggregate {
    std::string id;
    std::string loss;
    std::string regularizer;
    std::string config_hash;
    std::size_t runs = 0;
    std::size_t faults = 0;
    double mean = 0.0;
    double std = 0.0; // sample standard deviation, 0 for a single run
};

/// Sample mean and n-1 standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);

/// Runs every (cell, seed) not already present in out_dir, writes
/// runs/<config hash>.{csv,json} (the hash covers the seed), and the
/// aggregate table aggregate.csv.
std::vector<CellAggregate> run_sweep(const SweepSpec& spec, const Dataset& standard_train, const Dataset& test,
                                     const std::filesystem::path& out_dir, bool verbose = false);

/// Rebuilds aggregates from run files on disk.
std::vector<CellAggregate> aggregate_runs(const SweepSpec& spec, const std::filesystem::path& out_dir);
std::string aggregate_csv(const std::vector<CellAggregate>& rows);
std::vector<CellAggregate> read_aggregate_csv(const std::filesystem::path& path);

/// Five-point running median; the window shrinks symmetrically at the ends.
std::vector<double> smooth_series(const std::vector<double>& series);
std::vector<double> smooth_series(const RunRecord& record);

/// "mean±std" cells with rows = losses and columns = regularizers, plus
/// <column>_lowest and <column>_lowest3 flag columns. Missing cells are
/// "n/a" and excluded from ranking; ties at the cut are all flagged.
std::string report_table(const std::vector<CellAggregate>& rows, const std::vector<std::string>& losses,
                         const std::vector<std::string>& regularizers, bool percent = true);

/// Flags (lowest, lowest three) for one column of optional means.
std::vector<std::pair<bool, bool>> rank_column(const std::vector<std::optional<double>>& means);

} // namespace advloss
