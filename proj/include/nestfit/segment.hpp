#pragma once

// Two-segment comparison: fit the primary segment, keep its significant
// terms, refit the secondary segment on that restricted specification and
// compare matched coefficients by their ratio.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nestfit/dataset.hpp"
#include "nestfit/estimator.hpp"
#include "nestfit/model.hpp"
#include "nestfit/report.hpp"

namespace nestfit {

inline constexpr double kDefaultAlphaT = 1.645;

// Keeps every constant, every term whose coefficient has |t| >= alpha_t, and
// the tree unchanged.
inline ModelSpec restrict_spec(const ModelSpec& spec, const EstimationResult& result, double alpha_t = kDefaultAlphaT) {
  ModelSpec out;
  out.tree = spec.tree;
  out.base_alternative = spec.base_alternative;
  std::size_t covariate_terms = 0, kept_covariates = 0;
  for (const auto& term : spec.terms) {
    if (term.is_constant()) {
      out.terms.push_back(term);
      continue;
    }
    ++covariate_terms;
    const auto& p = result.at(term.parameter);
    const bool keep = alpha_t <= 0.0 || (std::isfinite(p.t_stat) && std::abs(p.t_stat) >= alpha_t);
    if (keep) {
      out.terms.push_back(term);
      ++kept_covariates;
    }
  }
  if (covariate_terms > 0 && kept_covariates == 0)
    input_error("no covariate is significant at |t| >= " + detail::fixed(alpha_t, 3) +
                "; compare the segments directly instead of restricting");
  return out;
}

enum class Dominance { primary, secondary, sign_conflict };

inline const char* to_string(Dominance d) {
  switch (d) {
    case Dominance::primary: return "primary";
    case Dominance::secondary: return "secondary";
    case Dominance::sign_conflict: return "sign_conflict";
  }
  return "";
}

struct CoefficientRatio {
  std::string parameter;
  std::vector<std::string> levels;  // alternatives the coefficient enters
  double primary_coef = 0.0;
  double secondary_coef = 0.0;
  double primary_t = 0.0;
  double secondary_t = 0.0;
  double ratio = std::numeric_limits<double>::quiet_NaN();  // unset for sign conflicts
  Dominance dominant = Dominance::primary;
};

// Ratio of a matched pair, or nothing when either side is not significant.
inline std::optional<CoefficientRatio> coefficient_ratio(const std::string& parameter, double primary_coef,
                                                         double primary_t, double secondary_coef, double secondary_t,
                                                         double alpha_t = kDefaultAlphaT) {
  auto significant = [&](double t) { return std::isfinite(t) && std::abs(t) >= alpha_t; };
  if (!significant(primary_t) || !significant(secondary_t)) return std::nullopt;
  if (primary_coef == 0.0 || secondary_coef == 0.0) return std::nullopt;
  CoefficientRatio r;
  r.parameter = parameter;
  r.primary_coef = primary_coef;
  r.secondary_coef = secondary_coef;
  r.primary_t = primary_t;
  r.secondary_t = secondary_t;
  if ((primary_coef > 0.0) != (secondary_coef > 0.0)) {
    r.dominant = Dominance::sign_conflict;
    return r;
  }
  r.ratio = primary_coef / secondary_coef;
  r.dominant = r.ratio > 1.0 ? Dominance::primary : Dominance::secondary;
  return r;
}

enum class PrimarySegment { larger, first, second };

struct SegmentOptions {
  FitOptions fit{};
  double alpha_t = kDefaultAlphaT;
  PrimarySegment primary = PrimarySegment::larger;
  std::string first_label = "a";
  std::string second_label = "b";
};

struct SegmentedComparison {
  std::string primary_label, secondary_label;
  EstimationResult primary_result, secondary_result;
  ModelSpec restricted_spec;
  std::vector<CoefficientRatio> ratios;  // spec term order; includes sign conflicts
  std::vector<std::string> dropped;      // significant in primary, not in secondary
  double alpha_t = kDefaultAlphaT;

  // Same-sign ratios split by dominance, each ordered by |ratio - 1| descending.
  std::vector<CoefficientRatio> dominant(Dominance which) const {
    std::vector<CoefficientRatio> out;
    for (const auto& r : ratios)
      if (r.dominant == which) out.push_back(r);
    std::stable_sort(out.begin(), out.end(), [](const CoefficientRatio& a, const CoefficientRatio& b) {
      return std::abs(a.ratio - 1.0) > std::abs(b.ratio - 1.0);
    });
    return out;
  }

  std::vector<CoefficientRatio> conflicts() const { return dominant(Dominance::sign_conflict); }

  const CoefficientRatio* find(const std::string& parameter) const {
    for (const auto& r : ratios)
      if (r.parameter == parameter) return &r;
    return nullptr;
  }
};

inline std::vector<std::string> parameter_levels(const ModelSpec& spec, const std::string& parameter) {
  std::vector<std::string> out;
  for (const auto& t : spec.terms)
    if (t.parameter == parameter)
      for (const auto& a : t.applies_to)
        if (std::find(out.begin(), out.end(), a) == out.end()) out.push_back(a);
  return out;
}

// Matches every non-constant coefficient of the restricted specification.
inline void assemble_ratios(SegmentedComparison& cmp) {
  cmp.ratios.clear();
  cmp.dropped.clear();
  std::vector<std::string> seen;
  for (const auto& term : cmp.restricted_spec.terms) {
    if (term.is_constant()) continue;
    if (std::find(seen.begin(), seen.end(), term.parameter) != seen.end()) continue;
    seen.push_back(term.parameter);
    const auto& p = cmp.primary_result.at(term.parameter);
    const auto& s = cmp.secondary_result.at(term.parameter);
    auto r = coefficient_ratio(term.parameter, p.estimate, p.t_stat, s.estimate, s.t_stat, cmp.alpha_t);
    if (!r) {
      cmp.dropped.push_back(term.parameter);
      continue;
    }
    r->levels = parameter_levels(cmp.restricted_spec, term.parameter);
    cmp.ratios.push_back(std::move(*r));
  }
}

inline SegmentedComparison compare_segments(const ModelSpec& spec, const Dataset& first, const Dataset& second,
                                            const SegmentOptions& options = {}) {
  bool first_is_primary = true;
  switch (options.primary) {
    case PrimarySegment::larger: first_is_primary = first.rows() >= second.rows(); break;
    case PrimarySegment::first: first_is_primary = true; break;
    case PrimarySegment::second: first_is_primary = false; break;
  }
  const Dataset& pd = first_is_primary ? first : second;
  const Dataset& sd = first_is_primary ? second : first;
  SegmentedComparison cmp;
  cmp.alpha_t = options.alpha_t;
  cmp.primary_label = first_is_primary ? options.first_label : options.second_label;
  cmp.secondary_label = first_is_primary ? options.second_label : options.first_label;

  auto labelled = [](const std::string& label, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.kind(), "segment '" + label + "': " + e.what());
    }
  };
  cmp.primary_result = labelled(cmp.primary_label, [&] { return fit(spec, pd, options.fit); });
  if (!cmp.primary_result.converged)
    numeric_error("segment '" + cmp.primary_label + "': fit did not converge (" + cmp.primary_result.message + ")");
  cmp.restricted_spec = labelled(cmp.primary_label, [&] {
    return restrict_spec(spec, cmp.primary_result, options.alpha_t);
  });
  cmp.secondary_result = labelled(cmp.secondary_label, [&] { return fit(cmp.restricted_spec, sd, options.fit); });
  if (!cmp.secondary_result.converged)
    numeric_error("segment '" + cmp.secondary_label + "': fit did not converge (" + cmp.secondary_result.message +
                  ")");
  assemble_ratios(cmp);
  return cmp;
}

namespace detail {

inline std::string join_levels(const std::vector<std::string>& levels) {
  std::string out;
  for (const auto& l : levels) out += (out.empty() ? "" : ";") + l;
  return out;
}

}  // namespace detail

inline std::string gap_csv(const std::vector<CoefficientRatio>& rows) {
  std::ostringstream out;
  out << "variable,severity_level,ratio\n";
  for (const auto& r : rows)
    out << csv::quote(r.parameter) << ',' << csv::quote(detail::join_levels(r.levels)) << ','
        << csv::format_double(r.ratio) << '\n';
  return out.str();
}

inline std::string gap_text(const SegmentedComparison& cmp) {
  std::ostringstream out;
  auto table = [&](const std::string& title, const std::vector<CoefficientRatio>& rows) {
    out << title << '\n';
    out << "  " << detail::pad_right("Variable", 36) << detail::pad_right("Level", 28)
        << detail::pad_left(cmp.primary_label, 10) << detail::pad_left(cmp.secondary_label, 10)
        << detail::pad_left("Ratio", 10) << '\n';
    for (const auto& r : rows)
      out << "  " << detail::pad_right(r.parameter, 36) << detail::pad_right(detail::join_levels(r.levels), 28)
          << detail::pad_left(detail::fixed(r.primary_coef, 3), 10)
          << detail::pad_left(detail::fixed(r.secondary_coef, 3), 10)
          << detail::pad_left(detail::fixed(r.ratio, 3), 10) << '\n';
    if (rows.empty()) out << "  (none)\n";
    out << '\n';
  };
  out << "Coefficient ratios " << cmp.primary_label << " / " << cmp.secondary_label << " (|t| >= "
      << detail::fixed(cmp.alpha_t, 3) << " in both segments)\n\n";
  table("Higher in " + cmp.primary_label, cmp.dominant(Dominance::primary));
  table("Higher in " + cmp.secondary_label, cmp.dominant(Dominance::secondary));
  out << "Sign conflicts (no ratio)\n";
  const auto conflicts = cmp.conflicts();
  for (const auto& r : conflicts)
    out << "  " << detail::pad_right(r.parameter, 36) << detail::pad_right(detail::join_levels(r.levels), 28)
        << detail::pad_left(detail::fixed(r.primary_coef, 3), 10)
        << detail::pad_left(detail::fixed(r.secondary_coef, 3), 10) << '\n';
  if (conflicts.empty()) out << "  (none)\n";
  out << "\nSignificant in " << cmp.primary_label << " only\n";
  for (const auto& d : cmp.dropped) out << "  " << d << '\n';
  if (cmp.dropped.empty()) out << "  (none)\n";
  return out.str();
}

struct GapReportPaths {
  std::string dominant_primary, dominant_secondary, report;
};

inline GapReportPaths gap_report(const SegmentedComparison& cmp, const std::string& prefix) {
  GapReportPaths paths{prefix + "_dominant_primary.csv", prefix + "_dominant_secondary.csv", prefix + "_report.txt"};
  auto write = [](const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) input_error("cannot write '" + path + "'");
    out << text;
  };
  write(paths.dominant_primary, gap_csv(cmp.dominant(Dominance::primary)));
  write(paths.dominant_secondary, gap_csv(cmp.dominant(Dominance::secondary)));
  write(paths.report, gap_text(cmp));
  return paths;
}

}  // namespace nestfit
