#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tfz/errors.hpp"
#include "tfz/numerics/rng.hpp"
#include "tfz/synthclips/synthclips.hpp"

namespace tfz {

namespace {

namespace fs = std::filesystem;

std::string_view question_prefix(TaskCategory c) {
  switch (c) {
    case TaskCategory::MR: return "what kind of motion does the bar perform";
    case TaskCategory::LM: return "where does the square end up relative to where it started";
    case TaskCategory::CM: return "which way does the camera move";
    case TaskCategory::MO: return "which object moves";
    case TaskCategory::AO: return "in what order do the disc blinking and the square moving happen";
    case TaskCategory::RC: return "please count the number of repeated actions";
  }
  return "";
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::size_t value_index(TaskCategory c, const std::string& v) {
  const auto& values = category_values(c);
  auto it = std::find(values.begin(), values.end(), v);
  if (it == values.end()) throw Error(ErrorKind::BadConfig, "unknown option '" + v + "' for " + std::string(category_name(c)));
  return static_cast<std::size_t>(it - values.begin());
}

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

}  // namespace

std::string_view category_name(TaskCategory c) {
  switch (c) {
    case TaskCategory::MR: return "MR";
    case TaskCategory::LM: return "LM";
    case TaskCategory::CM: return "CM";
    case TaskCategory::MO: return "MO";
    case TaskCategory::AO: return "AO";
    case TaskCategory::RC: return "RC";
  }
  return "?";
}

std::optional<TaskCategory> parse_category(std::string_view name) {
  for (TaskCategory c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

const std::vector<std::string>& category_values(TaskCategory c) {
  static const std::vector<std::string> mr{"translate", "rotate", "blink", "grow"};
  static const std::vector<std::string> lm{"ends-left", "ends-right", "ends-top", "ends-bottom"};
  static const std::vector<std::string> cm{"pan-left", "pan-right", "pan-up", "pan-down"};
  static const std::vector<std::string> mo{"rect", "cross", "disc", "bar"};
  static const std::vector<std::string> ao{"blink-then-move", "move-then-blink", "simultaneous", "neither"};
  static const std::vector<std::string> rc{"1", "2", "3", "4", "5", "6", "7", "8", "9"};
  switch (c) {
    case TaskCategory::MR: return mr;
    case TaskCategory::LM: return lm;
    case TaskCategory::CM: return cm;
    case TaskCategory::MO: return mo;
    case TaskCategory::AO: return ao;
    case TaskCategory::RC: return rc;
  }
  return mr;
}

void GenConfig::validate() const {
  if (frames == 0 || channels == 0 || height == 0 || width == 0 || sprite == 0) {
    throw Error(ErrorKind::BadConfig, "generator extents must be >= 1");
  }
  if (!(fps > 0.0)) throw Error(ErrorKind::BadConfig, "fps must be positive");
}

std::uint64_t sample_seed(std::uint64_t base_seed, TaskCategory category, std::size_t index) {
  return mix_seed({base_seed, static_cast<std::uint64_t>(category_index(category)), static_cast<std::uint64_t>(index)});
}

std::vector<std::size_t> question_tokens(TaskCategory category, const std::array<std::size_t, 4>& option_values) {
  std::vector<std::size_t> ids{category_index(category)};
  for (std::size_t slot = 0; slot < 4; ++slot) {
    if (option_values[slot] >= kMaxValuesPerCategory) throw Error(ErrorKind::BadConfig, "option value index too large");
    ids.push_back(kOptionTokenBase + slot * kMaxValuesPerCategory + option_values[slot]);
  }
  ids.push_back(kAskToken);
  return ids;
}

std::string question_text(const SyntheticSample& s) {
  std::string text(question_prefix(s.category));
  text += " ? options :";
  const char* labels[] = {"A", "B", "C", "D"};
  for (std::size_t i = 0; i < 4; ++i) {
    text += ' ';
    text += labels[i];
    text += ' ';
    text += s.options[i];
  }
  return text;
}

double annotation_density(double question_length, double duration_seconds) {
  if (!(duration_seconds > 0.0)) throw Error(ErrorKind::ZeroDuration, "video duration must be positive");
  return question_length / duration_seconds;
}

DatasetStats compute_stats(const std::vector<SyntheticSample>& samples, const GenConfig& gcfg, LengthUnit unit) {
  DatasetStats st;
  st.unit = unit;
  st.samples = samples.size();
  for (const auto& s : samples) {
    const std::string text = question_text(s);
    std::istringstream words(text);
    std::string w;
    while (words >> w) ++st.total_question_words;
    st.total_question_chars += text.size();
    st.total_duration += static_cast<double>(s.clip.frames()) / gcfg.fps;
    ++st.per_category[category_index(s.category)];
    ++st.option_position[s.answer_idx];
  }
  if (st.samples > 0) {
    const double length = static_cast<double>(unit == LengthUnit::Words ? st.total_question_words : st.total_question_chars);
    st.annotation_density = annotation_density(length, st.total_duration);
  }
  return st;
}

Dataset gen_dataset(std::size_t n_per_category, std::uint64_t seed, const GenConfig& gcfg,
                    std::span<const TaskCategory> categories) {
  if (n_per_category == 0) throw Error(ErrorKind::InvalidArgument, "need at least one sample per category");
  Dataset ds{gcfg, seed, {}, {}};
  ds.samples.reserve(n_per_category * categories.size());
  for (TaskCategory c : categories) {
    for (std::size_t i = 0; i < n_per_category; ++i) ds.samples.push_back(gen_sample(c, sample_seed(seed, c, i), gcfg));
  }
  ds.stats = compute_stats(ds.samples, gcfg);
  return ds;
}

Split split_dev_test(const std::vector<SyntheticSample>& samples, std::uint64_t seed, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(ErrorKind::InvalidArgument, "split fraction must be in (0, 1)");
  std::array<std::vector<std::size_t>, kNumCategories> by_cat;
  for (std::size_t i = 0; i < samples.size(); ++i) by_cat[category_index(samples[i].category)].push_back(i);

  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(samples.size()) * fraction));
  std::array<std::size_t, kNumCategories> take{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    take[c] = static_cast<std::size_t>(std::floor(static_cast<double>(by_cat[c].size()) * fraction));
    assigned += take[c];
  }
  // Leftover dev slots go one per category, in a seeded order.
  Rng rng(mix_seed({seed, 0x5b1u}));
  std::array<std::size_t, kNumCategories> order{0, 1, 2, 3, 4, 5};
  rng.shuffle(order.begin(), order.end());
  for (std::size_t i = 0; assigned < target && i < kNumCategories; ++i) {
    const std::size_t c = order[i];
    if (take[c] < by_cat[c].size()) {
      ++take[c];
      ++assigned;
    }
  }
  Split out;
  for (std::size_t c = 0; c < kNumCategories; ++c) {
    auto& idx = by_cat[c];
    rng.shuffle(idx.begin(), idx.end());
    out.dev.insert(out.dev.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
    out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
  }
  std::sort(out.dev.begin(), out.dev.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::string stats_csv(const DatasetStats& s) {
  std::ostringstream o;
  o << "metric,value\n";
  o << "samples," << s.samples << "\n";
  o << "total_question_words," << s.total_question_words << "\n";
  o << "total_question_chars," << s.total_question_chars << "\n";
  o << "total_duration_s," << fixed(s.total_duration, 3) << "\n";
  o << "annotation_density," << fixed(s.annotation_density, 4) << "\n";
  o << "density_unit," << (s.unit == LengthUnit::Words ? "words" : "characters") << "\n";
  for (TaskCategory c : kAllCategories) o << "count_" << category_name(c) << "," << s.per_category[category_index(c)] << "\n";
  const char* labels[] = {"A", "B", "C", "D"};
  for (std::size_t i = 0; i < 4; ++i) o << "answer_" << labels[i] << "," << s.option_position[i] << "\n";
  return o.str();
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "clips", ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
  std::ofstream rec(fs::path(dir) / "samples.csv");
  if (!rec) throw Error(ErrorKind::Io, "cannot write samples.csv in " + dir);
  rec << "category,seed,answer_idx,options,clip\n";
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    std::ostringstream name;
    name << "clips/" << category_name(s.category) << "_";
    name.width(6);
    name.fill('0');
    name << i << ".clp";
    save_clip(s.clip, (fs::path(dir) / name.str()).string());
    rec << category_name(s.category) << "," << s.seed << "," << s.answer_idx << "," << s.options[0] << "|" << s.options[1]
        << "|" << s.options[2] << "|" << s.options[3] << "," << name.str() << "\n";
  }
  const GenConfig& g = ds.config;
  nlohmann::json meta = {{"seed", ds.seed},         {"frames", g.frames}, {"channels", g.channels},
                         {"height", g.height},      {"width", g.width},   {"fps", g.fps},
                         {"sprite", g.sprite},      {"lm_displacement", g.lm_displacement},
                         {"samples", ds.samples.size()}};
  std::ofstream(fs::path(dir) / "meta.json") << meta.dump(2) << "\n";
  std::ofstream(fs::path(dir) / "stats.csv") << stats_csv(ds.stats);
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  {
    std::ifstream in(fs::path(dir) / "meta.json");
    if (!in) throw Error(ErrorKind::Io, "missing meta.json in " + dir);
    try {
      const auto meta = nlohmann::json::parse(in);
      ds.seed = meta.at("seed").get<std::uint64_t>();
      GenConfig& g = ds.config;
      g.frames = meta.at("frames").get<std::size_t>();
      g.channels = meta.at("channels").get<std::size_t>();
      g.height = meta.at("height").get<std::size_t>();
      g.width = meta.at("width").get<std::size_t>();
      g.fps = meta.at("fps").get<double>();
      g.sprite = meta.at("sprite").get<std::size_t>();
      g.lm_displacement = meta.at("lm_displacement").get<int>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::BadConfig, std::string("meta.json: ") + e.what());
    }
  }
  std::ifstream rec(fs::path(dir) / "samples.csv");
  if (!rec) throw Error(ErrorKind::Io, "missing samples.csv in " + dir);
  std::string line;
  std::getline(rec, line);
  if (line != "category,seed,answer_idx,options,clip") throw Error(ErrorKind::SchemaMismatch, "samples.csv header: " + line);
  while (std::getline(rec, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw Error(ErrorKind::SchemaMismatch, "samples.csv record: " + line);
    const auto cat = parse_category(f[0]);
    if (!cat) throw Error(ErrorKind::SchemaMismatch, "unknown category " + f[0]);
    const auto opts = split(f[3], '|');
    if (opts.size() != 4) throw Error(ErrorKind::SchemaMismatch, "expected 4 options: " + f[3]);
    SyntheticSample s;
    s.category = *cat;
    s.seed = std::stoull(f[1]);
    s.answer_idx = std::stoul(f[2]);
    if (s.answer_idx >= 4) throw Error(ErrorKind::SchemaMismatch, "answer index " + f[2]);
    std::array<std::size_t, 4> values{};
    for (std::size_t i = 0; i < 4; ++i) {
      s.options[i] = opts[i];
      values[i] = value_index(*cat, opts[i]);
    }
    s.truth = s.options[s.answer_idx];
    s.question_ids = question_tokens(*cat, values);
    s.clip = load_clip((fs::path(dir) / f[4]).string());
    ds.samples.push_back(std::move(s));
  }
  ds.stats = compute_stats(ds.samples, ds.config);
  return ds;
}

}  // namespace tfz
