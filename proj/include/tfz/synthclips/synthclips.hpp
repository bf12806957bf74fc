#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tfz/model/frontend.hpp"

namespace tfz {

enum class TaskCategory { MR, LM, CM, MO, AO, RC };

inline constexpr std::size_t kNumCategories = 6;
inline constexpr std::array<TaskCategory, kNumCategories> kAllCategories = {
    TaskCategory::MR, TaskCategory::LM, TaskCategory::CM, TaskCategory::MO, TaskCategory::AO, TaskCategory::RC};

std::string_view category_name(TaskCategory c);
std::optional<TaskCategory> parse_category(std::string_view name);
inline std::size_t category_index(TaskCategory c) { return static_cast<std::size_t>(c); }

/// Option values a category draws from, in a fixed order.
const std::vector<std::string>& category_values(TaskCategory c);

struct GenConfig {
  std::size_t frames = 16;
  std::size_t channels = 3;
  std::size_t height = 28;
  std::size_t width = 28;
  double fps = 8.0;
  std::size_t sprite = 6;
  int lm_displacement = 10;

  void validate() const;
  double duration_seconds() const { return static_cast<double>(frames) / fps; }
};

// Question token ids: category tokens 0..5, slot-tagged option values, then ASK.
inline constexpr std::size_t kMaxValuesPerCategory = 9;
inline constexpr std::size_t kOptionTokenBase = kNumCategories;
inline constexpr std::size_t kAskToken = kOptionTokenBase + 4 * kMaxValuesPerCategory;
inline constexpr std::size_t kQuestionLength = 6;
inline constexpr std::size_t kQuestionVocab = kAskToken + 1;

/// A fully determined clip description. Option and truth entries index
/// category_values(category).
struct SampleScript {
  TaskCategory category = TaskCategory::MR;
  std::size_t truth = 0;
  std::array<std::size_t, 4> options{};
  int jitter_x = 0;
  int jitter_y = 0;
  int displacement = 0;                 // LM / MO travel in pixels
  std::size_t direction = 0;            // MO mover: 0 left, 1 right, 2 up, 3 down
  std::array<std::size_t, 4> layout{};  // MO: shape code drawn in each quadrant
  std::uint64_t texture_seed = 0;       // CM scene

  std::size_t answer_idx() const;
};

struct SyntheticSample {
  VideoClip clip;
  TaskCategory category = TaskCategory::MR;
  std::uint64_t seed = 0;
  std::array<std::string, 4> options;
  std::size_t answer_idx = 0;
  std::vector<std::size_t> question_ids;
  std::string truth;
};

/// Draws a script for (category, seed).
SampleScript draw_script(TaskCategory category, std::uint64_t seed, const GenConfig& gcfg);

/// Renders a script. Throws BadConfig for impossible scripts: sprites that do
/// not fit, too few frames for the repetition count, options that are not
/// distinct or do not contain the truth exactly once, and clips whose frames
/// never change (answerable from the first frame).
SyntheticSample render_sample(const SampleScript& script, const GenConfig& gcfg, std::uint64_t seed = 0);

SyntheticSample gen_sample(TaskCategory category, std::uint64_t seed, const GenConfig& gcfg);

/// Per-sample seed derived from the dataset seed.
std::uint64_t sample_seed(std::uint64_t base_seed, TaskCategory category, std::size_t index);

/// Token ids [category, option 0..3 tagged by slot, ASK].
std::vector<std::size_t> question_tokens(TaskCategory category, const std::array<std::size_t, 4>& option_values);

/// Whitespace-delimited template text of the question.
std::string question_text(const SyntheticSample& s);

enum class LengthUnit { Words, Characters };

struct DatasetStats {
  std::size_t samples = 0;
  std::size_t total_question_words = 0;
  std::size_t total_question_chars = 0;
  double total_duration = 0.0;
  double annotation_density = 0.0;  // in `unit` per second
  LengthUnit unit = LengthUnit::Words;
  std::array<std::size_t, kNumCategories> per_category{};
  std::array<std::size_t, 4> option_position{};
};

/// Question length over video duration. Throws ZeroDuration when duration <= 0.
double annotation_density(double question_length, double duration_seconds);

DatasetStats compute_stats(const std::vector<SyntheticSample>& samples, const GenConfig& gcfg,
                           LengthUnit unit = LengthUnit::Words);

struct Dataset {
  GenConfig config;
  std::uint64_t seed = 0;
  std::vector<SyntheticSample> samples;  // category-major, index-minor
  DatasetStats stats;
};

Dataset gen_dataset(std::size_t n_per_category, std::uint64_t seed, const GenConfig& gcfg = {},
                    std::span<const TaskCategory> categories = kAllCategories);

struct Split {
  std::vector<std::size_t> dev;
  std::vector<std::size_t> test;
};

/// Stratified seeded split into index lists; dev gets round(n * fraction)
/// samples and every category's dev count is within one of its share.
Split split_dev_test(const std::vector<SyntheticSample>& samples, std::uint64_t seed, double fraction);

/// Writes samples.csv, clips/*.clp, meta.json and stats.csv under `dir`.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

std::string stats_csv(const DatasetStats& s);

}  // namespace tfz
