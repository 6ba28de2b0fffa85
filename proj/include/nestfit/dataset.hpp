#pragma once

// Tabular observations: one chosen alternative plus named covariate columns,
// read from and written to comma-separated text.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "nestfit/error.hpp"

namespace nestfit {

enum class ColumnType { numeric, text };

struct Column {
  std::string name;
  ColumnType type = ColumnType::numeric;
  std::vector<double> values;     // numeric columns; NaN marks a missing cell
  std::vector<std::string> text;  // text columns
};

struct Dataset {
  std::vector<std::string> alternatives;
  std::string chosen_column = "chosen";
  std::size_t chosen_position = 0;  // column position of the label in the file
  std::vector<std::size_t> chosen;  // alternative index per row
  std::vector<Column> columns;
  std::vector<std::string> provenance;  // prep-log lines

  std::size_t rows() const { return chosen.size(); }

  const Column* find(std::string_view name) const {
    for (const auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }

  Column* find(std::string_view name) {
    for (auto& c : columns)
      if (c.name == name) return &c;
    return nullptr;
  }

  const Column& column(std::string_view name) const {
    const auto* c = find(name);
    if (!c) input_error("dataset has no column '" + std::string(name) + "'");
    return *c;
  }

  const std::vector<double>& numeric(std::string_view name) const {
    const auto& c = column(name);
    if (c.type != ColumnType::numeric) input_error("column '" + std::string(name) + "' is not numeric");
    return c.values;
  }

  void add_numeric(std::string name, std::vector<double> values) {
    if (find(name)) input_error("dataset already has a column '" + name + "'");
    columns.push_back({std::move(name), ColumnType::numeric, std::move(values), {}});
  }

  void remove(std::string_view name) {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i].name == name) {
        columns.erase(columns.begin() + static_cast<std::ptrdiff_t>(i));
        if (i < chosen_position) --chosen_position;
        return;
      }
  }

  std::size_t distinct_chosen() const {
    std::vector<bool> seen(alternatives.size(), false);
    std::size_t n = 0;
    for (auto c : chosen)
      if (!seen[c]) {
        seen[c] = true;
        ++n;
      }
    return n;
  }
};

struct DatasetSchema {
  std::string chosen_column = "chosen";
  std::vector<std::string> alternatives;
};

namespace csv {

inline bool is_missing(std::string_view cell) { return cell.empty() || cell == "NA"; }

inline std::optional<double> parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

inline std::vector<std::string> split_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (quoted) input_error("line " + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(std::move(cur));
  return out;
}

inline std::string quote(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string q = "\"";
  for (char ch : cell) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

}  // namespace csv

inline Dataset read_dataset(std::istream& in, const DatasetSchema& schema) {
  if (schema.alternatives.empty()) input_error("dataset schema lists no alternatives");
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line() || line.empty()) input_error("line 1: missing header row");
  auto header = csv::split_line(line, line_no);

  std::optional<std::size_t> chosen_at;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i].empty()) input_error("line 1: empty column name at position " + std::to_string(i + 1));
    for (std::size_t j = 0; j < i; ++j)
      if (header[j] == header[i]) input_error("line 1: duplicate column '" + header[i] + "'");
    if (header[i] == schema.chosen_column) chosen_at = i;
  }
  if (!chosen_at) input_error("line 1: header has no chosen-alternative column '" + schema.chosen_column + "'");

  Dataset ds;
  ds.alternatives = schema.alternatives;
  ds.chosen_column = schema.chosen_column;
  ds.chosen_position = *chosen_at;

  std::vector<std::vector<std::string>> cells(header.size());
  std::size_t dropped = 0;
  while (next_line()) {
    if (line.empty()) continue;
    auto row = csv::split_line(line, line_no);
    if (row.size() != header.size())
      input_error("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                  " fields, found " + std::to_string(row.size()));
    const auto& label = row[*chosen_at];
    if (csv::is_missing(label)) {
      ++dropped;
      continue;
    }
    std::optional<std::size_t> idx;
    for (std::size_t a = 0; a < schema.alternatives.size(); ++a)
      if (schema.alternatives[a] == label) idx = a;
    if (!idx)
      input_error("line " + std::to_string(line_no) + ": unknown alternative '" + label + "' in column '" +
                  schema.chosen_column + "'");
    ds.chosen.push_back(*idx);
    for (std::size_t i = 0; i < row.size(); ++i)
      if (i != *chosen_at) cells[i].push_back(std::move(row[i]));
  }

  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i == *chosen_at) continue;
    Column col;
    col.name = header[i];
    bool numeric = true;
    std::vector<double> values;
    values.reserve(cells[i].size());
    for (const auto& cell : cells[i]) {
      if (csv::is_missing(cell)) {
        values.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      auto v = csv::parse_double(cell);
      if (!v) {
        numeric = false;
        break;
      }
      values.push_back(*v);
    }
    if (numeric) {
      col.values = std::move(values);
    } else {
      col.type = ColumnType::text;
      col.text = std::move(cells[i]);
    }
    ds.columns.push_back(std::move(col));
  }
  if (dropped > 0)
    ds.provenance.push_back("drop-missing-chosen\tcolumn=" + schema.chosen_column +
                            "\trows=" + std::to_string(dropped));
  return ds;
}

inline Dataset read_dataset_file(const std::string& path, const DatasetSchema& schema) {
  std::ifstream in(path);
  if (!in) input_error("cannot open data file '" + path + "'");
  return read_dataset(in, schema);
}

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  const std::size_t ncols = ds.columns.size() + 1;
  const std::size_t chosen_at = std::min(ds.chosen_position, ds.columns.size());
  {
    std::size_t c = 0;
    for (std::size_t i = 0; i < ncols; ++i) {
      if (i) out << ',';
      out << csv::quote(i == chosen_at ? ds.chosen_column : ds.columns[c++].name);
    }
    out << '\n';
  }
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < ncols; ++i) {
      if (i) out << ',';
      if (i == chosen_at) {
        out << csv::quote(ds.alternatives[ds.chosen[r]]);
        continue;
      }
      const auto& col = ds.columns[c++];
      if (col.type == ColumnType::numeric) {
        out << csv::format_double(col.values[r]);
      } else {
        out << csv::quote(col.text[r]);
      }
    }
    out << '\n';
  }
}

inline void write_dataset_file(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) input_error("cannot write data file '" + path + "'");
  write_dataset(out, ds);
  if (!out) input_error("failed writing data file '" + path + "'");
}

}  // namespace nestfit
