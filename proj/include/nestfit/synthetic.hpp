#pragma once

// Synthetic datasets drawn from a known model: independent covariates plus a
// simulated choice per row.
//
// Covariates are sampled column by column in order of first appearance in the
// model's terms: Uniform[0, 1] for continuous columns, Bernoulli(share) for
// binary ones. Columns without an explicit setting use the built-in defaults
// below (single-vehicle crash averages for the male sample) and are otherwise
// treated as continuous. Covariates come from Rng(seed); choices from
// Rng(seed ^ kChoiceStream).

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "nestfit/dataset.hpp"
#include "nestfit/design.hpp"
#include "nestfit/kernel.hpp"
#include "nestfit/model.hpp"
#include "nestfit/model_json.hpp"

namespace nestfit {

inline constexpr std::uint64_t kChoiceStream = 0x9E3779B97F4A7C15ull;

struct CovariateSetting {
  bool binary = false;
  double share = 0.5;
};

using CovariateSettings = std::map<std::string, CovariateSetting>;

inline const CovariateSettings& default_covariate_settings() {
  static const CovariateSettings defaults = {
      {"commercial_vehicle", {true, 0.041}},
      {"speeding", {true, 0.212}},
      {"intoxicated", {true, 0.160}},
      {"intersection", {true, 0.126}},
      {"weather_adverse", {true, 0.257}},
      {"urban", {true, 0.523}},
      {"drug", {true, 0.021}},
      {"not_divided", {true, 0.570}},
      {"age", {false, 0.0}},
      {"aadt_per_lane", {false, 0.0}},
  };
  return defaults;
}

inline std::vector<std::string> covariate_columns(const ModelSpec& spec) {
  std::vector<std::string> out;
  for (const auto& t : spec.terms)
    if (!t.is_constant() && std::find(out.begin(), out.end(), t.covariate) == out.end()) out.push_back(t.covariate);
  return out;
}

inline Dataset sample_covariates(const ModelSpec& spec, std::size_t n, std::uint64_t seed,
                                 const CovariateSettings& settings = {}) {
  Dataset ds;
  for (const auto& a : spec.tree.alternatives) ds.alternatives.push_back(a.id);
  const auto cols = covariate_columns(spec);
  std::vector<CovariateSetting> how;
  for (const auto& c : cols) {
    if (auto it = settings.find(c); it != settings.end()) {
      how.push_back(it->second);
    } else if (auto d = default_covariate_settings().find(c); d != default_covariate_settings().end()) {
      how.push_back(d->second);
    } else {
      how.push_back({false, 0.0});
    }
  }
  std::vector<std::vector<double>> values(cols.size(), std::vector<double>(n));
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cols.size(); ++c)
      values[c][i] = how[c].binary ? (rng.bernoulli(how[c].share) ? 1.0 : 0.0) : rng.uniform();
  for (std::size_t c = 0; c < cols.size(); ++c) ds.add_numeric(cols[c], std::move(values[c]));
  ds.chosen.assign(n, 0);
  ds.chosen_position = ds.columns.size();
  return ds;
}

inline Dataset simulate_dataset(const ModelSpec& spec, const ParameterVector& params, std::size_t n,
                                std::uint64_t seed, const CovariateSettings& settings = {}) {
  auto ds = sample_covariates(spec, n, seed, settings);
  if (n == 0) return ds;
  const auto dm = build_design(spec, ds);
  ds.chosen = simulate(params, dm, spec.tree, seed ^ kChoiceStream).chosen;
  return ds;
}

// Parameter file: {"parameters": {name: value, ...},
//                  "covariates": {column: {"share": p} | {"continuous": true}}}
struct ParameterFile {
  std::map<std::string, double> values;
  CovariateSettings covariates;
};

inline ParameterFile parameter_file_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"parameters", "covariates"}, "parameter file");
  ParameterFile pf;
  const auto& params = detail::require_key(j, "parameters", "parameter file");
  if (!params.is_object()) input_error("parameter file: 'parameters' must be an object");
  for (const auto& [name, v] : params.items()) pf.values[name] = detail::number(v, "parameters." + name);
  if (j.contains("covariates")) {
    const auto& cov = j["covariates"];
    if (!cov.is_object()) input_error("parameter file: 'covariates' must be an object");
    for (const auto& [name, c] : cov.items()) {
      detail::reject_unknown_keys(c, {"share", "continuous"}, "covariates." + name);
      CovariateSetting s;
      if (c.contains("share")) {
        s.binary = true;
        s.share = detail::number(c["share"], "covariates." + name + ".share");
        if (!(s.share >= 0.0 && s.share <= 1.0)) input_error("covariates." + name + ".share must lie in [0, 1]");
      } else if (!c.contains("continuous")) {
        input_error("covariates." + name + ": expected 'share' or 'continuous'");
      }
      pf.covariates[name] = s;
    }
  }
  return pf;
}

}  // namespace nestfit
