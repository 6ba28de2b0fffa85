#pragma once

// JSON form of a ModelSpec:
//
//   {
//     "alternatives": ["pdo", "possible_injury", ...],
//     "nests": [{"id": "class1", "members": ["severe_injury", "fatality"],
//                "iv": {"free": 0.5}},
//               {"id": "class3", "members": ["pdo"], "iv": {"fixed": 1}}],
//     "terms": [{"param": "asc_pdo", "covariate": "CONSTANT",
//                "alternatives": ["pdo"]}, ...],
//     "base_alternative": "fatality",
//     "plain_mnl": false            (optional)
//   }
//
// Unknown keys are rejected at every level.

#include <fstream>
#include <initializer_list>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "nestfit/error.hpp"
#include "nestfit/model.hpp"

namespace nestfit {

using json = nlohmann::json;

namespace detail {

inline void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) input_error(where + ": expected a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) input_error(where + ": unknown key '" + key + "'");
}

inline const json& require_key(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) input_error(where + ": missing key '" + std::string(key) + "'");
  return *it;
}

inline std::vector<std::string> string_list(const json& j, const std::string& where) {
  if (!j.is_array()) input_error(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& x : j) {
    if (!x.is_string()) input_error(where + ": expected an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

inline double number(const json& j, const std::string& where) {
  if (!j.is_number()) input_error(where + ": expected a number");
  return j.get<double>();
}

}  // namespace detail

inline ModelSpec model_from_json(const json& j) {
  detail::reject_unknown_keys(j, {"alternatives", "nests", "terms", "base_alternative", "plain_mnl"}, "model");
  ModelSpec spec;
  const auto alts = detail::string_list(detail::require_key(j, "alternatives", "model"), "model.alternatives");
  for (std::size_t i = 0; i < alts.size(); ++i) spec.tree.alternatives.push_back({alts[i], i});

  const auto& nests = detail::require_key(j, "nests", "model");
  if (!nests.is_array()) input_error("model.nests: expected an array");
  for (std::size_t n = 0; n < nests.size(); ++n) {
    const std::string where = "model.nests[" + std::to_string(n) + "]";
    const auto& jn = nests[n];
    detail::reject_unknown_keys(jn, {"id", "members", "iv"}, where);
    Nest nest;
    const auto& id = detail::require_key(jn, "id", where);
    if (!id.is_string()) input_error(where + ".id: expected a string");
    nest.id = id.get<std::string>();
    nest.members = detail::string_list(detail::require_key(jn, "members", where), where + ".members");
    const auto& iv = detail::require_key(jn, "iv", where);
    detail::reject_unknown_keys(iv, {"fixed", "free"}, where + ".iv");
    if (iv.size() != 1) input_error(where + ".iv: expected exactly one of 'fixed' or 'free'");
    if (iv.contains("fixed")) {
      nest.iv = FixedIv{detail::number(iv["fixed"], where + ".iv.fixed")};
    } else {
      nest.iv = FreeIv{detail::number(iv["free"], where + ".iv.free")};
    }
    spec.tree.nests.push_back(std::move(nest));
  }

  const auto& terms = detail::require_key(j, "terms", "model");
  if (!terms.is_array()) input_error("model.terms: expected an array");
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const std::string where = "model.terms[" + std::to_string(t) + "]";
    const auto& jt = terms[t];
    detail::reject_unknown_keys(jt, {"param", "covariate", "alternatives"}, where);
    UtilityTerm term;
    const auto& p = detail::require_key(jt, "param", where);
    const auto& c = detail::require_key(jt, "covariate", where);
    if (!p.is_string() || !c.is_string()) input_error(where + ": 'param' and 'covariate' must be strings");
    term.parameter = p.get<std::string>();
    term.covariate = c.get<std::string>();
    term.applies_to = detail::string_list(detail::require_key(jt, "alternatives", where), where + ".alternatives");
    spec.terms.push_back(std::move(term));
  }

  const auto& base = detail::require_key(j, "base_alternative", "model");
  if (!base.is_string()) input_error("model.base_alternative: expected a string");
  spec.base_alternative = base.get<std::string>();
  if (j.contains("plain_mnl")) {
    if (!j["plain_mnl"].is_boolean()) input_error("model.plain_mnl: expected a boolean");
    spec.tree.plain_mnl = j["plain_mnl"].get<bool>();
  }
  return spec;
}

inline json model_to_json(const ModelSpec& spec) {
  json j;
  j["alternatives"] = json::array();
  for (const auto& a : spec.tree.alternatives) j["alternatives"].push_back(a.id);
  j["nests"] = json::array();
  for (const auto& n : spec.tree.nests) {
    json iv;
    if (const auto* f = std::get_if<FixedIv>(&n.iv)) {
      iv["fixed"] = f->value;
    } else {
      iv["free"] = std::get<FreeIv>(n.iv).initial;
    }
    j["nests"].push_back({{"id", n.id}, {"members", n.members}, {"iv", iv}});
  }
  j["terms"] = json::array();
  for (const auto& t : spec.terms)
    j["terms"].push_back({{"param", t.parameter}, {"covariate", t.covariate}, {"alternatives", t.applies_to}});
  j["base_alternative"] = spec.base_alternative;
  if (spec.tree.plain_mnl) j["plain_mnl"] = true;
  return j;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) input_error("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    input_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline ModelSpec read_model_file(const std::string& path) {
  const auto j = read_json_file(path);
  try {
    return model_from_json(j);
  } catch (const Error& e) {
    input_error(path + ": " + e.what());
  }
}

}  // namespace nestfit
