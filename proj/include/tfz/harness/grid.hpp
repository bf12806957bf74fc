#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tfz/harness/train.hpp"

namespace tfz {

enum class GridAxis { FixedBudget, FixedFrames };

std::string_view axis_name(GridAxis a);
std::optional<GridAxis> parse_axis(std::string_view name);

struct ExperimentSpec {
  GridAxis axis = GridAxis::FixedFrames;
  std::vector<FusionMethod> methods{kCompressingMethods.begin(), kCompressingMethods.end()};
  std::vector<std::size_t> k_values{2, 4, 8, 16};
  std::size_t n_over_k = 4;  // FixedBudget
  std::size_t n_input = 16;  // FixedFrames
  std::uint64_t seed = 0;
  std::size_t train_per_category = 40;
  std::size_t test_per_category = 20;
  std::vector<TaskCategory> categories{kAllCategories.begin(), kAllCategories.end()};
  GenConfig gen;
  TrainConfig train;
  ModelConfig model;  // template; method, k and n_input are set per cell

  void validate() const;
};

struct GridCell {
  FusionMethod method = FusionMethod::Baseline;
  std::size_t k = 1;
  std::size_t n_input = 0;
};

/// Cells in report order: the uncompressed baseline (k = 1) first, then
/// method-major, k-minor over the remaining ratios.
std::vector<GridCell> plan_grid(const ExperimentSpec& spec);

/// Seed of one cell, independent of execution order.
std::uint64_t cell_seed(std::uint64_t base_seed, FusionMethod method, std::size_t k);

ModelConfig cell_model_config(const ExperimentSpec& spec, const GridCell& cell);

using CellCallback = std::function<void(const GridCell& cell, const RunResult& result)>;

/// Trains and evaluates every planned cell from scratch. Throws if a cell's
/// l_decoder disagrees with token_budget.
std::vector<RunResult> run_grid(const ExperimentSpec& spec, const CellCallback& on_cell = {});
std::vector<RunResult> run_grid_fixed_budget(const ExperimentSpec& spec, const CellCallback& on_cell = {});
std::vector<RunResult> run_grid_fixed_frames(const ExperimentSpec& spec, const CellCallback& on_cell = {});

/// Fills a spec from JSON; keys mirror the ExperimentSpec and TrainConfig
/// field names, with "model" and "gen" as nested objects.
ExperimentSpec spec_from_json(const std::string& text, ExperimentSpec base = {});
TrainConfig train_config_from_json(const std::string& text, TrainConfig base = {});

}  // namespace tfz
