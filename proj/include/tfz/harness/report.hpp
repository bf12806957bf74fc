#pragma once

#include <string>
#include <vector>

#include "tfz/harness/train.hpp"

namespace tfz {

/// String cells under a named column schema. Columns named like grid keys
/// (method, k, n_input, l_decoder, equivalent_frames) identify a row;
/// final_loss, seconds and cost columns are informational; every other
/// column is a metric.
struct ReportTable {
  std::string caption;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

enum class TableFormat { Csv, Markdown };

bool is_key_column(const std::string& name);
bool is_info_column(const std::string& name);

/// Deterministic rendering. Markdown bolds, within each group of rows sharing
/// every key column except `method`, the per-metric maximum (all tied cells).
/// Throws SchemaMismatch when a row does not match the columns.
std::string render_table(const ReportTable& table, TableFormat format);

struct ReportOptions {
  bool with_timing = false;
  bool with_cost = false;
};

/// Columns method,k,n_input,l_decoder,MR..RC,avg,final_loss (+ seconds, + cost).
ReportTable results_table(const std::vector<RunResult>& results, const ReportOptions& opt = {});

/// First line is the header; cells are split on commas.
ReportTable parse_table_csv(const std::string& text);

}  // namespace tfz
