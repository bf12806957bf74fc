// Command-line front end. Exit codes: 0 success, 1 validation error,
// 2 numerical failure (diverged loss, failed gradient check).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "tfz/errors.hpp"
#include "tfz/harness/gradsuite.hpp"
#include "tfz/harness/grid.hpp"
#include "tfz/harness/report.hpp"
#include "tfz/harness/train.hpp"
#include "tfz/numerics/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace tfz;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << text;
}

FusionMethod method_arg(const std::string& name) {
  const auto m = parse_method(name);
  if (!m) throw Error(ErrorKind::BadConfig, "unknown method '" + name + "'");
  return *m;
}

TableFormat format_arg(const std::string& f) {
  if (f == "md" || f == "markdown") return TableFormat::Markdown;
  if (f == "csv") return TableFormat::Csv;
  throw Error(ErrorKind::BadConfig, "unknown format '" + f + "' (md or csv)");
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

std::string sidecar(const std::string& ckpt) { return ckpt + ".json"; }

struct GenArgs {
  std::size_t per_category = 25;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t frames = 16;
  std::vector<std::string> categories;
};

struct TrainArgs {
  std::string method = "baseline";
  std::size_t k = 1;
  std::size_t n_input = 4;
  std::string config;
  std::string data;
  std::string out = "model.tfz";
  std::uint64_t seed = 0;
};

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string format = "csv";
};

struct GridArgs {
  std::string axis = "fixed-frames";
  std::vector<std::string> methods;
  std::vector<std::size_t> k;
  std::size_t n_input = 0;
  std::size_t n_over_k = 0;
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool with_timing = false;
  bool with_cost = false;
};

struct BudgetArgs {
  std::vector<std::size_t> n_input{16};
  std::vector<std::size_t> l{64};
  std::vector<std::size_t> k{1, 2, 4, 8, 16};
};

int cmd_gen_data(const GenArgs& a) {
  GenConfig g;
  g.frames = a.frames;
  std::vector<TaskCategory> cats;
  for (const auto& name : a.categories) {
    const auto c = parse_category(name);
    if (!c) throw Error(ErrorKind::BadConfig, "unknown category '" + name + "'");
    cats.push_back(*c);
  }
  if (cats.empty()) cats.assign(kAllCategories.begin(), kAllCategories.end());
  const Dataset ds = gen_dataset(a.per_category, a.seed, g, cats);
  save_dataset(ds, a.out);
  std::cerr << "wrote " << ds.samples.size() << " samples to " << a.out << "\n";
  return 0;
}

int cmd_train(const TrainArgs& a) {
  const std::string text = a.config.empty() ? "{}" : read_text(a.config);
  ExperimentSpec spec = spec_from_json(text);
  ModelConfig mc = spec.model;
  mc.method = method_arg(a.method);
  mc.k = a.k;
  mc.n_input = a.n_input;
  Dataset ds;
  if (a.data.empty()) {
    ds = gen_dataset(spec.train_per_category, spec.seed, spec.gen, spec.categories);
  } else {
    ds = load_dataset(a.data);
  }
  mc.channels = ds.config.channels;
  mc.height = ds.config.height;
  mc.width = ds.config.width;
  mc.validate();
  Model model = Model::init(mc, mix_seed({a.seed, 1}));
  TrainConfig tc = spec.train;
  tc.seed = mix_seed({a.seed, 2});
  const PreparedSet data = prepare(ds.samples, mc.n_input, all_rows(ds.samples.size()));
  const TrainResult r = train(model, data, tc, [&](std::size_t step, double loss, double lr) {
    if (step % 100 == 0 || step + 1 == tc.total_steps) {
      std::cerr << "step " << step << " loss " << loss << " lr " << lr << "\n";
    }
  });
  save_checkpoint(model.params(), a.out);
  write_text(sidecar(a.out), to_json(mc) + "\n");
  std::cout << "final_loss," << (r.losses.empty() ? 0.0 : r.losses.back()) << "\nseconds," << r.seconds << "\n";
  return 0;
}

int cmd_eval(const EvalArgs& a) {
  const ModelConfig mc = model_config_from_json(read_text(sidecar(a.ckpt)));
  Model model = Model::init(mc, 0);
  assign_checkpoint(model.params(), load_checkpoint(a.ckpt));
  const Dataset ds = load_dataset(a.data);
  RunResult r = evaluate(model, prepare(ds.samples, mc.n_input, all_rows(ds.samples.size())));
  std::cout << render_table(results_table({r}), format_arg(a.format));
  return 0;
}

int cmd_grid(const GridArgs& a) {
  ExperimentSpec spec = a.config.empty() ? ExperimentSpec{} : spec_from_json(read_text(a.config));
  const auto axis = parse_axis(a.axis);
  if (!axis) throw Error(ErrorKind::BadConfig, "unknown axis '" + a.axis + "'");
  spec.axis = *axis;
  if (!a.methods.empty()) {
    spec.methods.clear();
    for (const auto& m : a.methods) spec.methods.push_back(method_arg(m));
  }
  if (!a.k.empty()) spec.k_values = a.k;
  if (a.n_input) spec.n_input = a.n_input;
  if (a.n_over_k) spec.n_over_k = a.n_over_k;
  if (a.seed_set) spec.seed = a.seed;
  spec.validate();
  const auto results = run_grid(spec, [](const GridCell& c, const RunResult& r) {
    std::cerr << method_name(c.method) << " k=" << c.k << " n_input=" << c.n_input << " avg=" << r.average << "\n";
  });
  write_text(a.out, render_table(results_table(results, {a.with_timing, a.with_cost}), TableFormat::Csv));
  return 0;
}

int cmd_budget(const BudgetArgs& a) {
  ReportTable t{"", {"n_input", "l", "k", "l_decoder"}, {}};
  for (std::size_t n : a.n_input) {
    for (std::size_t l : a.l) {
      for (std::size_t k : a.k) {
        const TokenBudget b = token_budget(n, l, k);
        t.rows.push_back({std::to_string(n), std::to_string(l), std::to_string(k), std::to_string(b.l_decoder)});
      }
    }
  }
  std::cout << render_table(t, TableFormat::Csv);
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  bool ok = true;
  for (const GradCaseResult& r : run_gradient_suite(module)) {
    std::cout << (r.pass() ? "PASS " : "FAIL ") << r.module << "/" << r.name << " max_rel_err=" << r.report.max_rel_err
              << " tol=" << r.tol;
    if (!r.pass()) std::cout << " worst=" << r.report.worst;
    std::cout << "\n";
    ok = ok && r.pass();
  }
  return ok ? 0 : kExitNumerical;
}

int cmd_report(const std::string& in, const std::string& format, const std::string& caption) {
  ReportTable t = parse_table_csv(read_text(in));
  t.caption = caption;
  std::cout << render_table(t, format_arg(format));
  return 0;
}

int cmd_stats(const std::string& dir, const std::string& unit) {
  LengthUnit u = LengthUnit::Words;
  if (unit == "chars" || unit == "characters") {
    u = LengthUnit::Characters;
  } else if (unit != "words") {
    throw Error(ErrorKind::BadConfig, "unknown unit '" + unit + "' (words or chars)");
  }
  const Dataset ds = load_dataset(dir);
  std::cout << stats_csv(compute_stats(ds.samples, ds.config, u));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal token compression toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic motion-question dataset");
  gen_cmd->add_option("--per-category", gen.per_category, "Samples per category")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed, "Dataset seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--frames", gen.frames, "Frames per clip");
  gen_cmd->add_option("--categories", gen.categories, "Subset of MR,LM,CM,MO,AO,RC")->delimiter(',');

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train one model and write a checkpoint");
  train_cmd->add_option("--method", tr.method, "baseline, pre-encoder, pllava, kangaroo, qformer or te-fusion");
  train_cmd->add_option("--k", tr.k, "Compression ratio");
  train_cmd->add_option("--n-input", tr.n_input, "Frames into the encoder");
  train_cmd->add_option("--config", tr.config, "JSON with TrainConfig / ExperimentSpec keys");
  train_cmd->add_option("--data", tr.data, "Dataset directory (default: generate from the config)");
  train_cmd->add_option("--out", tr.out, "Checkpoint path; the model config goes to <out>.json");
  train_cmd->add_option("--seed", tr.seed, "Model and shuffling seed");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval_cmd->add_option("--ckpt", ev.ckpt, "Checkpoint written by train")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--format", ev.format, "csv or md");

  GridArgs gr;
  auto* grid_cmd = app.add_subcommand("grid", "Run an ablation grid and write results CSV");
  grid_cmd->add_option("--axis", gr.axis, "fixed-budget or fixed-frames");
  grid_cmd->add_option("--methods", gr.methods, "Methods (comma separated)")->delimiter(',');
  grid_cmd->add_option("--k", gr.k, "Ratios (comma separated)")->delimiter(',');
  grid_cmd->add_option("--n-input", gr.n_input, "Frames for fixed-frames");
  grid_cmd->add_option("--n-over-k", gr.n_over_k, "Equivalent frames for fixed-budget");
  grid_cmd->add_option("--config", gr.config, "JSON with ExperimentSpec / TrainConfig keys");
  grid_cmd->add_option("--out", gr.out, "Results CSV (default stdout)");
  auto* seed_opt = grid_cmd->add_option("--seed", gr.seed, "Base seed");
  grid_cmd->add_flag("--with-timing", gr.with_timing, "Add wall-clock seconds");
  grid_cmd->add_flag("--with-cost", gr.with_cost, "Add attention span, decoder length and MACs");

  BudgetArgs bu;
  auto* budget_cmd = app.add_subcommand("budget", "Print the decoder token budget as CSV");
  budget_cmd->add_option("--n-input", bu.n_input, "Frames (comma separated)")->delimiter(',');
  budget_cmd->add_option("--l", bu.l, "Tokens per frame (comma separated)")->delimiter(',');
  budget_cmd->add_option("--k", bu.k, "Ratios (comma separated)")->delimiter(',');

  std::string module;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  grad_cmd->add_option("--module", module, "ops, frontend, encoder, compressor, decoder or model");

  std::string report_in, report_format = "md", caption;
  auto* report_cmd = app.add_subcommand("report", "Render a results CSV");
  report_cmd->add_option("--in", report_in, "CSV file")->required();
  report_cmd->add_option("--format", report_format, "md or csv");
  report_cmd->add_option("--caption", caption, "Markdown caption");

  std::string stats_dir, unit = "words";
  auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics as CSV");
  stats_cmd->add_option("--data", stats_dir, "Dataset directory")->required();
  stats_cmd->add_option("--unit", unit, "Question length unit: words or chars");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  gr.seed_set = seed_opt->count() > 0;

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*grid_cmd) return cmd_grid(gr);
    if (*budget_cmd) return cmd_budget(bu);
    if (*grad_cmd) return cmd_gradcheck(module);
    if (*report_cmd) return cmd_report(report_in, report_format, caption);
    if (*stats_cmd) return cmd_stats(stats_dir, unit);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.is_numerical() ? kExitNumerical : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
