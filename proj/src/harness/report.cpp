#include "tfz/harness/report.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>

#include "tfz/errors.hpp"

namespace tfz {

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

std::optional<double> as_number(const std::string& cell) {
  if (cell.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) return std::nullopt;
  return v;
}

void check_schema(const ReportTable& t) {
  if (t.columns.empty()) throw Error(ErrorKind::SchemaMismatch, "table has no columns");
  std::set<std::string> seen;
  for (const auto& c : t.columns) {
    if (c.empty() || !seen.insert(c).second) throw Error(ErrorKind::SchemaMismatch, "empty or duplicate column '" + c + "'");
  }
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (t.rows[r].size() != t.columns.size()) {
      throw Error(ErrorKind::SchemaMismatch, "row " + std::to_string(r) + " has " + std::to_string(t.rows[r].size()) +
                                                 " cells for " + std::to_string(t.columns.size()) + " columns");
    }
  }
}

// bold[r][c] for the markdown rendering.
std::vector<std::vector<bool>> bold_cells(const ReportTable& t) {
  std::vector<std::vector<bool>> bold(t.rows.size(), std::vector<bool>(t.columns.size(), false));
  std::vector<std::size_t> group_cols, metric_cols;
  for (std::size_t c = 0; c < t.columns.size(); ++c) {
    const std::string& name = t.columns[c];
    if (is_key_column(name)) {
      if (name != "method") group_cols.push_back(c);
    } else if (!is_info_column(name)) {
      metric_cols.push_back(c);
    }
  }
  std::map<std::vector<std::string>, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::vector<std::string> key;
    for (std::size_t c : group_cols) key.push_back(t.rows[r][c]);
    groups[key].push_back(r);
  }
  for (const auto& [key, rows] : groups) {
    if (rows.size() < 2) continue;
    for (std::size_t c : metric_cols) {
      std::optional<double> best;
      for (std::size_t r : rows) {
        const auto v = as_number(t.rows[r][c]);
        if (v && (!best || *v > *best)) best = v;
      }
      if (!best) continue;
      for (std::size_t r : rows) {
        const auto v = as_number(t.rows[r][c]);
        if (v && *v == *best) bold[r][c] = true;
      }
    }
  }
  return bold;
}

}  // namespace

bool is_key_column(const std::string& name) {
  static const std::set<std::string> keys{"method", "k", "n_input", "l_decoder", "equivalent_frames"};
  return keys.count(name) != 0;
}

bool is_info_column(const std::string& name) {
  static const std::set<std::string> info{"final_loss", "seconds", "enc_attention_span", "dec_length", "macs"};
  return info.count(name) != 0;
}

std::string render_table(const ReportTable& table, TableFormat format) {
  check_schema(table);
  std::ostringstream o;
  if (format == TableFormat::Csv) {
    for (std::size_t c = 0; c < table.columns.size(); ++c) o << (c ? "," : "") << table.columns[c];
    o << "\n";
    for (const auto& row : table.rows) {
      for (std::size_t c = 0; c < row.size(); ++c) o << (c ? "," : "") << row[c];
      o << "\n";
    }
    return o.str();
  }
  if (!table.caption.empty()) o << table.caption << "\n\n";
  o << "|";
  for (const auto& c : table.columns) o << " " << c << " |";
  o << "\n|";
  for (std::size_t c = 0; c < table.columns.size(); ++c) o << "---|";
  o << "\n";
  const auto bold = bold_cells(table);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    o << "|";
    for (std::size_t c = 0; c < table.columns.size(); ++c) {
      const std::string& cell = table.rows[r][c];
      if (bold[r][c]) {
        o << " **" << cell << "** |";
      } else {
        o << " " << cell << " |";
      }
    }
    o << "\n";
  }
  return o.str();
}

ReportTable results_table(const std::vector<RunResult>& results, const ReportOptions& opt) {
  ReportTable t;
  t.columns = {"method", "k", "n_input", "l_decoder"};
  for (TaskCategory c : kAllCategories) t.columns.emplace_back(category_name(c));
  t.columns.insert(t.columns.end(), {"avg", "final_loss"});
  if (opt.with_timing) t.columns.emplace_back("seconds");
  if (opt.with_cost) t.columns.insert(t.columns.end(), {"enc_attention_span", "dec_length", "macs"});
  for (const RunResult& r : results) {
    std::vector<std::string> row{std::string(method_name(r.method)), std::to_string(r.k), std::to_string(r.n_input),
                                 std::to_string(r.l_decoder)};
    for (std::size_t c = 0; c < kNumCategories; ++c) row.push_back(r.accuracy[c] ? fixed(*r.accuracy[c], 4) : "");
    row.push_back(fixed(r.average, 4));
    row.push_back(fixed(r.final_loss, 6));
    if (opt.with_timing) row.push_back(fixed(r.seconds, 2));
    if (opt.with_cost) {
      row.push_back(std::to_string(r.cost.encoder_attention_span));
      row.push_back(std::to_string(r.cost.decoder_length));
      row.push_back(fixed(r.cost.macs_per_sample, 0));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

ReportTable parse_table_csv(const std::string& text) {
  ReportTable t;
  std::istringstream in(text);
  std::string line;
  const auto cells = [](const std::string& l) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : l) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else if (ch != '\r') {
        cur += ch;
      }
    }
    out.push_back(cur);
    return out;
  };
  if (!std::getline(in, line) || line.empty()) throw Error(ErrorKind::SchemaMismatch, "missing CSV header");
  t.columns = cells(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    t.rows.push_back(cells(line));
  }
  check_schema(t);
  return t;
}

}  // namespace tfz
