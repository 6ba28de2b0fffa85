#pragma once

// Preprocessing of modeling-ready crash tables: min-max normalization,
// categorical expansion into 0/1 indicators with a frequency floor, and a
// pairwise collinearity screen decided by single-variable MNL fits.
//
// Every transform appends one line to Dataset::provenance. The resulting
// prep-log replays against the raw file to rebuild the prepared table.
// Prep-log grammar, one transform per line, tab-separated key=value fields,
// values percent-encoded for '%', tab, newline, ',' and '=':
//
//   nestfit-preplog 1
//   drop-missing-chosen  column=<name>  rows=<count>
//   normalize            column=<name>  min=<x>  max=<x>
//   expand               column=<name>  floor=<x>  expanded=<c1,c2>  skipped=<c3>
//   collinear            first=<a>  second=<b>  r=<x>  aic_first=<x>  aic_second=<x>  keep=<a>  drop=<b>
//   drop                 column=<name>
//   # free-form comment (warnings)

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nestfit/dataset.hpp"
#include "nestfit/error.hpp"
#include "nestfit/estimator.hpp"
#include "nestfit/model.hpp"
#include "nestfit/model_json.hpp"

namespace nestfit {

inline constexpr const char* kPrepLogHeader = "nestfit-preplog 1";

struct CategoricalColumn {
  std::string name;
  std::vector<std::string> categories;
};

struct PrepConfig {
  std::string chosen_column = "chosen";
  std::vector<std::string> alternatives;
  std::vector<std::string> continuous_columns;
  std::vector<CategoricalColumn> categorical_columns;
  std::vector<std::string> screen_columns;
  double min_category_frequency = 0.005;
  double collinearity_threshold = 0.7;

  void check() const {
    if (!(min_category_frequency > 0.0 && min_category_frequency < 1.0))
      input_error("min_category_frequency must lie in (0, 1)");
    if (!(collinearity_threshold > 0.0 && collinearity_threshold < 1.0))
      input_error("collinearity_threshold must lie in (0, 1)");
    if (alternatives.empty()) input_error("prep config lists no alternatives");
  }

  DatasetSchema schema() const { return {chosen_column, alternatives}; }
};

namespace prep_log {

inline std::string encode(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '%' || ch == '\t' || ch == '\n' || ch == '\r' || ch == ',' || ch == '=') {
      char buf[4];
      std::snprintf(buf, sizeof buf, "%%%02X", static_cast<unsigned char>(ch));
      out += buf;
    } else {
      out += ch;
    }
  }
  return out;
}

inline std::string decode(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size()) {
      out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
      i += 2;
    } else {
      out += s[i];
    }
  }
  return out;
}

inline std::string encode_list(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + encode(xs[i]);
  return out;
}

inline std::vector<std::string> decode_list(const std::string& s) {
  std::vector<std::string> out;
  if (s.empty()) return out;
  std::size_t start = 0;
  while (true) {
    auto comma = s.find(',', start);
    out.push_back(decode(s.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

struct Line {
  std::string op;
  std::map<std::string, std::string> fields;

  const std::string& get(const std::string& key) const {
    auto it = fields.find(key);
    if (it == fields.end()) input_error("prep-log '" + op + "' line lacks field '" + key + "'");
    return it->second;
  }
};

inline Line parse(const std::string& text) {
  Line line;
  std::size_t start = 0;
  bool first = true;
  while (start <= text.size()) {
    auto tab = text.find('\t', start);
    const std::string tok = text.substr(start, tab - start);
    if (first) {
      line.op = tok;
      first = false;
    } else {
      auto eq = tok.find('=');
      if (eq == std::string::npos) input_error("prep-log field without '=': " + tok);
      line.fields[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return line;
}

inline double number(const std::string& s) {
  auto v = csv::parse_double(s);
  if (!v) input_error("prep-log: bad number '" + s + "'");
  return *v;
}

}  // namespace prep_log

inline void write_prep_log(std::ostream& out, const std::vector<std::string>& lines) {
  out << kPrepLogHeader << '\n';
  for (const auto& l : lines) out << l << '\n';
}

inline std::vector<std::string> read_prep_log(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kPrepLogHeader) input_error("prep-log: missing header line");
  std::vector<std::string> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

namespace detail {

inline std::pair<double, double> finite_range(const std::vector<double>& v) {
  double lo = INFINITY, hi = -INFINITY;
  for (double x : v)
    if (std::isfinite(x)) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  return {lo, hi};
}

inline void apply_min_max(std::vector<double>& v, double lo, double hi) {
  if (hi > lo) {
    const double span = hi - lo;
    for (auto& x : v)
      if (std::isfinite(x)) x = (x - lo) / span;
  } else {
    for (auto& x : v)
      if (std::isfinite(x)) x = 0.0;
  }
}

// Row membership of each category; error on values outside the list.
inline std::vector<std::vector<double>> category_indicators(const Column& col,
                                                            const std::vector<std::string>& categories) {
  const std::size_t n = col.type == ColumnType::numeric ? col.values.size() : col.text.size();
  std::vector<std::vector<double>> ind(categories.size(), std::vector<double>(n, 0.0));
  std::vector<double> numeric_cats;
  if (col.type == ColumnType::numeric) {
    for (const auto& c : categories) {
      auto v = csv::parse_double(c);
      if (!v) input_error("column '" + col.name + "' is numeric but category '" + c + "' is not a number");
      numeric_cats.push_back(*v);
    }
  }
  std::set<std::string> novel;
  for (std::size_t r = 0; r < n; ++r) {
    bool missing = false;
    std::size_t hit = npos;
    if (col.type == ColumnType::numeric) {
      const double x = col.values[r];
      missing = std::isnan(x);
      for (std::size_t c = 0; c < numeric_cats.size() && !missing; ++c)
        if (numeric_cats[c] == x) hit = c;
      if (!missing && hit == npos) novel.insert(csv::format_double(x));
    } else {
      missing = csv::is_missing(col.text[r]);
      for (std::size_t c = 0; c < categories.size() && !missing; ++c)
        if (categories[c] == col.text[r]) hit = c;
      if (!missing && hit == npos) novel.insert(col.text[r]);
    }
    if (hit != npos) ind[hit][r] = 1.0;
  }
  if (!novel.empty()) {
    std::string msg = "column '" + col.name + "' has values outside its category list:";
    for (const auto& v : novel) msg += " '" + v + "'";
    input_error(msg);
  }
  return ind;
}

inline bool is_already_binary(const Column& col, const std::vector<std::string>& categories) {
  if (col.type != ColumnType::numeric || categories.size() != 2) return false;
  auto a = csv::parse_double(categories[0]), b = csv::parse_double(categories[1]);
  return a && b && std::min(*a, *b) == 0.0 && std::max(*a, *b) == 1.0;
}

inline std::string indicator_name(const std::string& column, const std::string& category) {
  return column + "_" + category;
}

}  // namespace detail

// x -> (x - min) / (max - min). A constant column becomes all zeros and the
// prep-log gets a warning comment.
inline Dataset min_max_normalize(Dataset ds, const std::string& column) {
  auto* col = ds.find(column);
  if (!col) input_error("dataset has no column '" + column + "'");
  if (col->type != ColumnType::numeric) input_error("column '" + column + "' is not numeric");
  auto [lo, hi] = detail::finite_range(col->values);
  if (!std::isfinite(lo)) lo = hi = 0.0;
  detail::apply_min_max(col->values, lo, hi);
  if (!(hi > lo))
    ds.provenance.push_back("# warning: column " + prep_log::encode(column) + " is constant; set to 0");
  ds.provenance.push_back("normalize\tcolumn=" + prep_log::encode(column) + "\tmin=" + csv::format_double(lo) +
                          "\tmax=" + csv::format_double(hi));
  return ds;
}

// One 0/1 column per category whose sample share reaches the floor. A numeric
// column already coded {0, 1} yields the single indicator <column>_1.
inline Dataset expand_categorical(Dataset ds, const std::string& column, const std::vector<std::string>& categories,
                                  double floor) {
  const auto* col = ds.find(column);
  if (!col) input_error("dataset has no column '" + column + "'");
  if (categories.empty()) input_error("column '" + column + "' has an empty category list");
  auto ind = detail::category_indicators(*col, categories);
  const double n = static_cast<double>(ds.rows());
  std::vector<std::string> expanded, skipped;
  std::vector<std::pair<std::string, std::vector<double>>> add;
  const bool binary = detail::is_already_binary(*col, categories);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    if (binary && *csv::parse_double(categories[c]) == 0.0) {
      skipped.push_back(categories[c]);
      continue;
    }
    double count = 0.0;
    for (double x : ind[c]) count += x;
    const double share = n > 0 ? count / n : 0.0;
    if (share >= floor) {
      expanded.push_back(categories[c]);
      add.emplace_back(detail::indicator_name(column, categories[c]), std::move(ind[c]));
    } else {
      skipped.push_back(categories[c]);
      ds.provenance.push_back("# category " + prep_log::encode(categories[c]) + " of " + prep_log::encode(column) +
                              " below frequency floor (share " + csv::format_double(share) + ")");
    }
  }
  for (auto& [name, values] : add) ds.add_numeric(name, std::move(values));
  ds.provenance.push_back("expand\tcolumn=" + prep_log::encode(column) + "\tfloor=" + csv::format_double(floor) +
                          "\texpanded=" + prep_log::encode_list(expanded) +
                          "\tskipped=" + prep_log::encode_list(skipped));
  return ds;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// MNL with alternative-specific constants and one alternative-specific
// coefficient set for the covariate; the last alternative is the base.
inline ModelSpec single_variable_mnl(const std::vector<std::string>& alternatives, const std::string& covariate) {
  ModelSpec spec;
  spec.tree = NestTree::mnl(alternatives);
  spec.base_alternative = alternatives.back();
  for (std::size_t j = 0; j + 1 < alternatives.size(); ++j) {
    spec.terms.push_back({"asc_" + alternatives[j], std::string(kConstant), {alternatives[j]}});
    spec.terms.push_back({covariate + "@" + alternatives[j], covariate, {alternatives[j]}});
  }
  return spec;
}

inline double single_variable_aic(const Dataset& ds, const std::string& covariate) {
  const auto spec = single_variable_mnl(ds.alternatives, covariate);
  const auto r = fit(spec, ds);
  const double k = static_cast<double>(r.free_parameter_count());
  return 2.0 * k - 2.0 * r.ll_final;
}

struct ScreenResult {
  std::vector<std::string> kept;
  std::vector<std::string> dropped;
  std::vector<std::string> log;  // prep-log "collinear" lines
};

// Pairs are visited in name order; a pair is screened only while both
// members are still kept, so clusters resolve greedily.
inline ScreenResult screen_collinearity(const Dataset& ds, std::vector<std::string> candidates, double threshold) {
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  for (const auto& c : candidates) {
    const auto& v = ds.numeric(c);
    for (double x : v)
      if (!std::isfinite(x)) input_error("column '" + c + "' has missing values; cannot screen it");
  }
  std::map<std::string, double> aic_cache;
  auto aic = [&](const std::string& c) {
    auto it = aic_cache.find(c);
    if (it != aic_cache.end()) return it->second;
    return aic_cache[c] = single_variable_aic(ds, c);
  };
  ScreenResult res;
  std::set<std::string> dropped;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    for (std::size_t j = i + 1; j < candidates.size(); ++j) {
      const auto& a = candidates[i];
      const auto& b = candidates[j];
      if (dropped.count(a) || dropped.count(b)) continue;
      const double r = pearson(ds.numeric(a), ds.numeric(b));
      if (!(std::abs(r) > threshold)) continue;
      const double aic_a = aic(a), aic_b = aic(b);
      const bool drop_a = aic_a > aic_b;
      const auto& keep = drop_a ? b : a;
      const auto& drop = drop_a ? a : b;
      dropped.insert(drop);
      res.log.push_back("collinear\tfirst=" + prep_log::encode(a) + "\tsecond=" + prep_log::encode(b) +
                        "\tr=" + csv::format_double(r) + "\taic_first=" + csv::format_double(aic_a) +
                        "\taic_second=" + csv::format_double(aic_b) + "\tkeep=" + prep_log::encode(keep) +
                        "\tdrop=" + prep_log::encode(drop));
    }
  }
  for (const auto& c : candidates) (dropped.count(c) ? res.dropped : res.kept).push_back(c);
  return res;
}

inline Dataset drop_columns(Dataset ds, const std::vector<std::string>& names) {
  for (const auto& n : names) {
    if (!ds.find(n)) input_error("dataset has no column '" + n + "'");
    ds.remove(n);
    ds.provenance.push_back("drop\tcolumn=" + prep_log::encode(n));
  }
  return ds;
}

inline Dataset run_prep(Dataset ds, const PrepConfig& cfg) {
  cfg.check();
  for (const auto& c : cfg.continuous_columns) ds = min_max_normalize(std::move(ds), c);
  for (const auto& c : cfg.categorical_columns)
    ds = expand_categorical(std::move(ds), c.name, c.categories, cfg.min_category_frequency);
  if (!cfg.screen_columns.empty()) {
    auto screen = screen_collinearity(ds, cfg.screen_columns, cfg.collinearity_threshold);
    for (auto& l : screen.log) ds.provenance.push_back(std::move(l));
    ds = drop_columns(std::move(ds), screen.dropped);
  }
  return ds;
}

// Re-applies a prep-log to a freshly parsed raw dataset using the recorded
// transform parameters.
inline Dataset replay_prep(Dataset ds, const std::vector<std::string>& lines) {
  std::size_t dropped_rows = 0;
  for (const auto& l : ds.provenance) {
    if (l.rfind("drop-missing-chosen", 0) == 0) dropped_rows = static_cast<std::size_t>(
        prep_log::number(prep_log::parse(l).get("rows")));
  }
  std::vector<std::string> out_log = ds.provenance;
  for (const auto& text : lines) {
    if (!text.empty() && text[0] == '#') {
      out_log.push_back(text);
      continue;
    }
    const auto line = prep_log::parse(text);
    if (line.op == "drop-missing-chosen") {
      if (static_cast<std::size_t>(prep_log::number(line.get("rows"))) != dropped_rows)
        input_error("prep-log replay: raw file drops a different number of rows than recorded");
      continue;
    }
    if (line.op == "normalize") {
      const auto name = prep_log::decode(line.get("column"));
      auto* col = ds.find(name);
      if (!col || col->type != ColumnType::numeric) input_error("prep-log replay: no numeric column '" + name + "'");
      detail::apply_min_max(col->values, prep_log::number(line.get("min")), prep_log::number(line.get("max")));
    } else if (line.op == "expand") {
      const auto name = prep_log::decode(line.get("column"));
      const auto expanded = prep_log::decode_list(line.get("expanded"));
      auto all = expanded;
      for (const auto& s : prep_log::decode_list(line.get("skipped"))) all.push_back(s);
      const auto* col = ds.find(name);
      if (!col) input_error("prep-log replay: no column '" + name + "'");
      auto ind = detail::category_indicators(*col, all);
      for (std::size_t c = 0; c < expanded.size(); ++c)
        ds.add_numeric(detail::indicator_name(name, expanded[c]), std::move(ind[c]));
    } else if (line.op == "drop") {
      const auto name = prep_log::decode(line.get("column"));
      if (!ds.find(name)) input_error("prep-log replay: no column '" + name + "'");
      ds.remove(name);
    } else if (line.op != "collinear") {
      input_error("prep-log replay: unknown transform '" + line.op + "'");
    }
    out_log.push_back(text);
  }
  ds.provenance = std::move(out_log);
  return ds;
}

inline PrepConfig prep_config_from_json(const nlohmann::json& j) {
  detail::reject_unknown_keys(j,
                              {"chosen_column", "alternatives", "continuous_columns", "categorical_columns",
                               "screen_columns", "min_category_frequency", "collinearity_threshold"},
                              "prep config");
  PrepConfig cfg;
  if (j.contains("chosen_column")) {
    if (!j["chosen_column"].is_string()) input_error("prep config: chosen_column must be a string");
    cfg.chosen_column = j["chosen_column"].get<std::string>();
  }
  cfg.alternatives = detail::string_list(detail::require_key(j, "alternatives", "prep config"), "alternatives");
  if (j.contains("continuous_columns"))
    cfg.continuous_columns = detail::string_list(j["continuous_columns"], "continuous_columns");
  if (j.contains("screen_columns")) cfg.screen_columns = detail::string_list(j["screen_columns"], "screen_columns");
  if (j.contains("categorical_columns")) {
    const auto& cats = j["categorical_columns"];
    if (!cats.is_array()) input_error("prep config: categorical_columns must be an array");
    for (const auto& c : cats) {
      detail::reject_unknown_keys(c, {"name", "categories"}, "categorical_columns[]");
      const auto& name = detail::require_key(c, "name", "categorical_columns[]");
      if (!name.is_string()) input_error("categorical_columns[].name must be a string");
      std::vector<std::string> values;
      for (const auto& v : detail::require_key(c, "categories", "categorical_columns[]")) {
        if (v.is_string()) {
          values.push_back(v.get<std::string>());
        } else if (v.is_number()) {
          values.push_back(csv::format_double(v.get<double>()));
        } else {
          input_error("categorical_columns[].categories must hold strings or numbers");
        }
      }
      cfg.categorical_columns.push_back({name.get<std::string>(), std::move(values)});
    }
  }
  if (j.contains("min_category_frequency"))
    cfg.min_category_frequency = detail::number(j["min_category_frequency"], "min_category_frequency");
  if (j.contains("collinearity_threshold"))
    cfg.collinearity_threshold = detail::number(j["collinearity_threshold"], "collinearity_threshold");
  cfg.check();
  return cfg;
}

}  // namespace nestfit
