#include "tfz/harness/grid.hpp"

#include <algorithm>

#include "json.hpp"
#include "tfz/errors.hpp"
#include "tfz/numerics/rng.hpp"

namespace tfz {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

void read_train(const json& j, TrainConfig& t) {
  read_field(j, "total_steps", t.total_steps);
  read_field(j, "warmup_steps", t.warmup_steps);
  read_field(j, "batch", t.batch);
  read_field(j, "lr", t.lr);
  read_field(j, "min_lr", t.min_lr);
  read_field(j, "adam_beta1", t.adam_beta1);
  read_field(j, "adam_beta2", t.adam_beta2);
  read_field(j, "adam_eps", t.adam_eps);
  read_field(j, "seed", t.seed);
  read_field(j, "shuffle_options", t.shuffle_options);
}

std::size_t method_index(FusionMethod m) { return static_cast<std::size_t>(m); }

}  // namespace

std::string_view axis_name(GridAxis a) { return a == GridAxis::FixedBudget ? "fixed-budget" : "fixed-frames"; }

std::optional<GridAxis> parse_axis(std::string_view name) {
  if (name == "fixed-budget") return GridAxis::FixedBudget;
  if (name == "fixed-frames") return GridAxis::FixedFrames;
  return std::nullopt;
}

void ExperimentSpec::validate() const {
  gen.validate();
  train.validate();
  if (k_values.empty()) throw Error(ErrorKind::BadConfig, "grid needs at least one k");
  if (methods.empty()) throw Error(ErrorKind::BadConfig, "grid needs at least one method");
  if (categories.empty() || train_per_category == 0 || test_per_category == 0) {
    throw Error(ErrorKind::BadConfig, "grid needs categories and non-empty train and test sets");
  }
  for (std::size_t k : k_values) {
    if (k == 0) throw Error(ErrorKind::BadConfig, "k must be >= 1");
    const std::size_t n = axis == GridAxis::FixedBudget ? k * n_over_k : n_input;
    if (n == 0 || n > gen.frames || gen.frames % n != 0) {
      throw Error(ErrorKind::IndivisibleFrames, "N_input=" + std::to_string(n) + " does not divide the " +
                                                    std::to_string(gen.frames) + " generated frames");
    }
    if (n % k != 0) throw Error(ErrorKind::IndivisibleFrames, "k=" + std::to_string(k) + " does not divide N_input=" + std::to_string(n));
  }
}

std::vector<GridCell> plan_grid(const ExperimentSpec& spec) {
  const auto n_for = [&](std::size_t k) { return spec.axis == GridAxis::FixedBudget ? k * spec.n_over_k : spec.n_input; };
  std::vector<GridCell> cells;
  const bool has_one = std::find(spec.k_values.begin(), spec.k_values.end(), 1u) != spec.k_values.end();
  const bool lists_baseline = std::find(spec.methods.begin(), spec.methods.end(), FusionMethod::Baseline) != spec.methods.end();
  if (has_one || lists_baseline) cells.push_back({FusionMethod::Baseline, 1, n_for(1)});
  for (FusionMethod m : spec.methods) {
    if (m == FusionMethod::Baseline) continue;
    for (std::size_t k : spec.k_values) {
      if (k > 1) cells.push_back({m, k, n_for(k)});
    }
  }
  return cells;
}

std::uint64_t cell_seed(std::uint64_t base_seed, FusionMethod method, std::size_t k) {
  return mix_seed({base_seed, static_cast<std::uint64_t>(method_index(method)), static_cast<std::uint64_t>(k)});
}

ModelConfig cell_model_config(const ExperimentSpec& spec, const GridCell& cell) {
  ModelConfig m = spec.model;
  m.method = cell.method;
  m.k = cell.k;
  m.n_input = cell.n_input;
  m.channels = spec.gen.channels;
  m.height = spec.gen.height;
  m.width = spec.gen.width;
  return m;
}

std::vector<RunResult> run_grid(const ExperimentSpec& spec, const CellCallback& on_cell) {
  spec.validate();
  const std::size_t per_cat = spec.train_per_category + spec.test_per_category;
  const Dataset ds = gen_dataset(per_cat, spec.seed, spec.gen, spec.categories);
  const double fraction = static_cast<double>(spec.train_per_category) / static_cast<double>(per_cat);
  const Split split = split_dev_test(ds.samples, mix_seed({spec.seed, 0x5911u}), fraction);

  std::vector<RunResult> results;
  for (const GridCell& cell : plan_grid(spec)) {
    const ModelConfig mc = cell_model_config(spec, cell);
    const std::uint64_t seed = cell_seed(spec.seed, cell.method, cell.k);
    Model model = Model::init(mc, mix_seed({seed, 1}));
    TrainConfig tc = spec.train;
    tc.seed = mix_seed({seed, 2});
    const PreparedSet train_set = prepare(ds.samples, cell.n_input, split.dev);
    const TrainResult tr = train(model, train_set, tc);
    RunResult r = evaluate(model, prepare(ds.samples, cell.n_input, split.test));
    r.final_loss = tr.losses.empty() ? 0.0 : tr.losses.back();
    r.seconds = tr.seconds;
    const std::size_t expect = token_budget(cell.n_input, mc.decoder_tokens_per_frame(), effective_ratio(cell.method, cell.k)).l_decoder;
    if (r.l_decoder != expect) {
      throw Error(ErrorKind::ShapeMismatch, "cell " + std::string(method_name(cell.method)) + " k=" + std::to_string(cell.k) +
                                                " emitted l_decoder " + std::to_string(r.l_decoder) + ", budget " +
                                                std::to_string(expect));
    }
    if (on_cell) on_cell(cell, r);
    results.push_back(r);
  }
  return results;
}

std::vector<RunResult> run_grid_fixed_budget(const ExperimentSpec& spec, const CellCallback& on_cell) {
  if (spec.axis != GridAxis::FixedBudget) throw Error(ErrorKind::BadConfig, "spec axis is not fixed-budget");
  return run_grid(spec, on_cell);
}

std::vector<RunResult> run_grid_fixed_frames(const ExperimentSpec& spec, const CellCallback& on_cell) {
  if (spec.axis != GridAxis::FixedFrames) throw Error(ErrorKind::BadConfig, "spec axis is not fixed-frames");
  return run_grid(spec, on_cell);
}

TrainConfig train_config_from_json(const std::string& text, TrainConfig base) {
  try {
    const json j = json::parse(text);
    read_train(j, base);
    if (j.contains("train")) read_train(j.at("train"), base);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  return base;
}

ExperimentSpec spec_from_json(const std::string& text, ExperimentSpec s) {
  try {
    const json j = json::parse(text);
    if (j.contains("axis")) {
      const auto a = parse_axis(j.at("axis").get<std::string>());
      if (!a) throw Error(ErrorKind::BadConfig, "unknown axis " + j.at("axis").dump());
      s.axis = *a;
    }
    if (j.contains("methods")) {
      s.methods.clear();
      for (const auto& name : j.at("methods")) {
        const auto m = parse_method(name.get<std::string>());
        if (!m) throw Error(ErrorKind::BadConfig, "unknown method " + name.dump());
        s.methods.push_back(*m);
      }
    }
    if (j.contains("categories")) {
      s.categories.clear();
      for (const auto& name : j.at("categories")) {
        const auto c = parse_category(name.get<std::string>());
        if (!c) throw Error(ErrorKind::BadConfig, "unknown category " + name.dump());
        s.categories.push_back(*c);
      }
    }
    read_field(j, "k_values", s.k_values);
    read_field(j, "n_over_k", s.n_over_k);
    read_field(j, "n_input", s.n_input);
    read_field(j, "seed", s.seed);
    read_field(j, "train_per_category", s.train_per_category);
    read_field(j, "test_per_category", s.test_per_category);
    if (j.contains("gen")) {
      const json& g = j.at("gen");
      read_field(g, "frames", s.gen.frames);
      read_field(g, "channels", s.gen.channels);
      read_field(g, "height", s.gen.height);
      read_field(g, "width", s.gen.width);
      read_field(g, "fps", s.gen.fps);
      read_field(g, "sprite", s.gen.sprite);
      read_field(g, "lm_displacement", s.gen.lm_displacement);
    }
    if (j.contains("model")) s.model = model_config_from_json(j.at("model").dump());
  } catch (const json::exception& e) {
    throw Error(ErrorKind::BadConfig, e.what());
  }
  s.train = train_config_from_json(text, s.train);
  return s;
}

}  // namespace tfz
