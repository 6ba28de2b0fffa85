#pragma once

// Emitters for fitted results: a JSON report, a fixed-width table grouped by
// alternative, and the three-part model selection diagnostic.

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "nestfit/estimator.hpp"
#include "nestfit/model.hpp"

namespace nestfit {

namespace detail {

inline std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string pad_right(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

inline std::string pad_left(std::string s, std::size_t w) {
  if (s.size() < w) s.insert(0, w - s.size(), ' ');
  return s;
}

inline nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace detail

inline nlohmann::json result_to_json(const EstimationResult& r) {
  using nlohmann::json;
  json j;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["message"] = r.message;
  j["sample_size"] = r.sample_size;
  j["ll_final"] = r.ll_final;
  j["ll_null"] = r.ll_null;
  j["ll_start"] = r.ll_start;
  j["null_model"] = to_string(r.null_model);
  j["se_method"] = to_string(r.se_method);
  j["pseudo_adjusted_r2"] = r.pseudo_adjusted_r2;
  j["gradient_max_norm"] = r.gradient_max_norm;
  j["parameters"] = json::array();
  for (const auto& p : r.parameters)
    j["parameters"].push_back({{"name", p.name},
                               {"kind", p.kind == ParamKind::beta ? "beta" : "iv"},
                               {"estimate", p.estimate},
                               {"std_error", detail::number_or_null(p.std_error)},
                               {"t_stat", detail::number_or_null(p.t_stat)},
                               {"stars", p.stars}});
  j["inclusive_values"] = json::array();
  const auto checks = validate_iv(r);
  for (std::size_t n = 0; n < r.iv_report.size(); ++n) {
    const auto& e = r.iv_report[n];
    j["inclusive_values"].push_back({{"nest", e.nest},
                                     {"fixed", e.fixed},
                                     {"estimate", e.estimate},
                                     {"std_error", detail::number_or_null(e.std_error)},
                                     {"within_unit_interval", e.within_unit_interval},
                                     {"distance_from_1", e.distance_from_1},
                                     {"verdict", to_string(checks[n].verdict)}});
  }
  j["separation"] = json::array();
  for (const auto& s : r.separation)
    j["separation"].push_back({{"parameter", s.parameter}, {"magnitude", detail::number_or_null(s.magnitude)}});
  j["warnings"] = r.warnings;
  j["chosen_counts"] = r.chosen_counts;
  return j;
}

// Variable | Coefficient | t-test, grouped by alternative, followed by the
// inclusive value block and fit statistics.
inline std::string format_result_table(const EstimationResult& r, const ModelSpec& spec) {
  constexpr std::size_t w_var = 40, w_coef = 14, w_t = 10;
  std::ostringstream out;
  const std::string rule(w_var + w_coef + w_t, '-');
  out << detail::pad_right("Variable", w_var) << detail::pad_left("Coefficient", w_coef)
      << detail::pad_left("t-test", w_t) << '\n'
      << rule << '\n';
  auto row = [&](const std::string& label, const ParameterEstimate& p) {
    out << detail::pad_right("  " + label, w_var) << detail::pad_left(detail::fixed(p.estimate, 3) + p.stars, w_coef)
        << detail::pad_left(detail::fixed(p.t_stat, 2), w_t) << '\n';
  };
  for (const auto& alt : spec.tree.alternatives) {
    out << alt.id << '\n';
    for (const auto& term : spec.terms) {
      if (std::find(term.applies_to.begin(), term.applies_to.end(), alt.id) == term.applies_to.end()) continue;
      const auto* p = r.find(term.parameter);
      if (!p) continue;
      row(term.is_constant() ? "Constant (" + term.parameter + ")" : term.parameter, *p);
    }
  }
  out << "Inclusive value parameters\n";
  for (const auto& e : r.iv_report) {
    if (e.fixed) {
      out << detail::pad_right("  " + e.nest, w_var)
          << detail::pad_left(detail::fixed(e.estimate, 0) + " (Fixed)", w_coef) << '\n';
    } else {
      const auto& p = r.at(iv_parameter_name(*std::find_if(spec.tree.nests.begin(), spec.tree.nests.end(),
                                                           [&](const Nest& n) { return n.id == e.nest; })));
      row(e.nest, p);
    }
  }
  out << rule << '\n';
  out << detail::pad_right("McFadden Pseudo Adjusted R^2", w_var)
      << detail::pad_left(detail::fixed(r.pseudo_adjusted_r2, 3), w_coef) << '\n';
  out << detail::pad_right("Log-likelihood at convergence", w_var)
      << detail::pad_left(detail::fixed(r.ll_final, 3), w_coef) << '\n';
  out << detail::pad_right(std::string("Log-likelihood (null, ") + to_string(r.null_model) + ")", w_var)
      << detail::pad_left(detail::fixed(r.ll_null, 3), w_coef) << '\n';
  out << detail::pad_right("Sample size", w_var) << detail::pad_left(std::to_string(r.sample_size), w_coef) << '\n';
  out << detail::pad_right("Converged", w_var) << detail::pad_left(r.converged ? "yes" : "no", w_coef) << '\n';
  out << "Note: ***, **, * mark significance at 1, 5 and 10 percent.\n";
  for (const auto& w : r.warnings) out << "Warning: " << w << '\n';
  return out.str();
}

struct HensherSection {
  std::string title;
  std::vector<std::string> lines;
  bool flagged = false;
};

struct HensherReport {
  HensherSection goodness_of_fit;
  HensherSection inclusive_value;
  HensherSection significance;

  std::string text() const {
    std::ostringstream out;
    for (const auto* s : {&goodness_of_fit, &inclusive_value, &significance}) {
      out << s->title << '\n';
      for (const auto& l : s->lines) out << "  " << l << '\n';
    }
    return out.str();
  }
};

inline HensherReport hensher_diagnostics(const EstimationResult& r, const ModelSpec& spec) {
  HensherReport rep;
  rep.goodness_of_fit.title = "Criterion 1: goodness of fit";
  rep.goodness_of_fit.lines = {
      "McFadden pseudo adjusted R^2 = " + detail::fixed(r.pseudo_adjusted_r2, 4),
      "log-likelihood at convergence = " + detail::fixed(r.ll_final, 4),
      std::string("null log-likelihood (") + to_string(r.null_model) + ") = " + detail::fixed(r.ll_null, 4),
      "free parameters = " + std::to_string(r.free_parameter_count()) +
          ", sample size = " + std::to_string(r.sample_size)};
  if (!(r.pseudo_adjusted_r2 > 0.0)) {
    rep.goodness_of_fit.flagged = true;
    rep.goodness_of_fit.lines.push_back("fit does not improve on the null model");
  }

  rep.inclusive_value.title = "Criterion 2: inclusive value";
  const auto checks = validate_iv(r);
  bool any_free = false;
  for (const auto& c : checks) {
    if (c.verdict == IvVerdict::boundary) continue;
    any_free = true;
    rep.inclusive_value.lines.push_back(c.nest + ": " + detail::fixed(c.estimate, 4) + " -> " + to_string(c.verdict));
    if (c.verdict == IvVerdict::violation) rep.inclusive_value.flagged = true;
  }
  if (!any_free) rep.inclusive_value.lines.push_back("no free inclusive values");
  if (rep.inclusive_value.flagged)
    rep.inclusive_value.lines.push_back("model inappropriate: an inclusive value lies outside (0, 1]");

  rep.significance.title = "Criterion 3: significance and sign";
  for (const auto& term : spec.terms) {
    const auto* p = r.find(term.parameter);
    if (!p) continue;
    std::string alts;
    for (const auto& a : term.applies_to) alts += (alts.empty() ? "" : "+") + a;
    const std::string sign = p->estimate > 0 ? "positive" : (p->estimate < 0 ? "negative" : "zero");
    const bool sig = std::isfinite(p->t_stat) && std::abs(p->t_stat) >= 1.645;
    rep.significance.lines.push_back(term.parameter + " [" + alts + "]: " + sign + ", t = " +
                                     detail::fixed(p->t_stat, 2) + (sig ? " (significant)" : " (not significant)"));
  }
  return rep;
}

}  // namespace nestfit
