#pragma once

// Nesting tree, utility specification and parameter layout of a two-level
// nested logit model.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "nestfit/error.hpp"

namespace nestfit {

inline constexpr std::string_view kConstant = "CONSTANT";
inline constexpr std::size_t npos = static_cast<std::size_t>(-1);

struct Alternative {
  std::string id;
  std::size_t index = 0;
};

struct FixedIv {
  double value = 1.0;
};

struct FreeIv {
  double initial = 0.5;
};

using IvParam = std::variant<FixedIv, FreeIv>;

struct Nest {
  std::string id;
  std::vector<std::string> members;
  IvParam iv = FreeIv{};

  bool is_free() const { return std::holds_alternative<FreeIv>(iv); }
};

struct NestTree {
  std::vector<Alternative> alternatives;
  std::vector<Nest> nests;
  // A single all-encompassing nest is only accepted when this is set.
  bool plain_mnl = false;

  std::size_t size() const { return alternatives.size(); }

  std::optional<std::size_t> index_of(std::string_view id) const {
    for (const auto& a : alternatives)
      if (a.id == id) return a.index;
    return std::nullopt;
  }

  std::size_t free_iv_count() const {
    return static_cast<std::size_t>(
        std::count_if(nests.begin(), nests.end(), [](const Nest& n) { return n.is_free(); }));
  }

  // Every alternative in its own degenerate nest: the multinomial logit.
  static NestTree mnl(const std::vector<std::string>& ids) {
    NestTree tree;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      tree.alternatives.push_back({ids[i], i});
      tree.nests.push_back({ids[i], {ids[i]}, FixedIv{1.0}});
    }
    tree.plain_mnl = true;
    return tree;
  }

  static NestTree from_ids(const std::vector<std::string>& ids, std::vector<Nest> nests) {
    NestTree tree;
    for (std::size_t i = 0; i < ids.size(); ++i) tree.alternatives.push_back({ids[i], i});
    tree.nests = std::move(nests);
    return tree;
  }
};

struct UtilityTerm {
  std::string parameter;
  std::string covariate;  // column name or kConstant
  std::vector<std::string> applies_to;

  bool is_constant() const { return covariate == kConstant; }
};

struct ModelSpec {
  NestTree tree;
  std::vector<UtilityTerm> terms;
  std::string base_alternative;
};

enum class ViolationKind {
  empty_tree,
  duplicate_alternative,
  bad_alternative_index,
  empty_nest,
  duplicate_nest,
  unknown_member,
  deeper_nesting,
  partition,
  too_few_nests,
  singleton_free_iv,
  fixed_iv_range,
  free_iv_start,
  unknown_base,
  constant_on_base,
  empty_applies_to,
  unknown_term_alternative,
  duplicate_term,
  name_collision,
};

struct Violation {
  ViolationKind kind;
  std::string message;
};

inline std::string iv_parameter_name(const Nest& nest) { return "iv_" + nest.id; }

// Returns every structural problem in a deterministic order: tree checks
// first (alternatives, then nests in declaration order), then terms.
inline std::vector<Violation> validate_spec(const ModelSpec& spec) {
  std::vector<Violation> out;
  const auto& tree = spec.tree;
  auto add = [&out](ViolationKind k, std::string msg) { out.push_back({k, std::move(msg)}); };

  if (tree.alternatives.empty()) add(ViolationKind::empty_tree, "tree has no alternatives");

  std::set<std::string> alt_ids;
  for (std::size_t i = 0; i < tree.alternatives.size(); ++i) {
    const auto& a = tree.alternatives[i];
    if (!alt_ids.insert(a.id).second)
      add(ViolationKind::duplicate_alternative, "alternative '" + a.id + "' declared more than once");
    if (a.index != i)
      add(ViolationKind::bad_alternative_index,
          "alternative '" + a.id + "' has index " + std::to_string(a.index) + ", expected " +
              std::to_string(i));
  }

  std::set<std::string> nest_ids;
  for (const auto& n : tree.nests) nest_ids.insert(n.id);

  std::map<std::string, std::vector<std::string>> owners;
  std::set<std::string> seen_nests;
  for (const auto& n : tree.nests) {
    if (!seen_nests.insert(n.id).second)
      add(ViolationKind::duplicate_nest, "nest '" + n.id + "' declared more than once");
    if (n.members.empty()) add(ViolationKind::empty_nest, "nest '" + n.id + "' has no members");
    for (const auto& m : n.members) {
      if (alt_ids.count(m)) {
        owners[m].push_back(n.id);
      } else if (nest_ids.count(m)) {
        add(ViolationKind::deeper_nesting,
            "nest '" + n.id + "' contains nest '" + m + "'; only two-level trees are supported");
      } else {
        add(ViolationKind::unknown_member, "nest '" + n.id + "' lists unknown alternative '" + m + "'");
      }
    }
    if (const auto* fixed = std::get_if<FixedIv>(&n.iv)) {
      if (!(fixed->value > 0.0 && fixed->value <= 1.0))
        add(ViolationKind::fixed_iv_range,
            "nest '" + n.id + "' has fixed inclusive value " + std::to_string(fixed->value) +
                " outside (0, 1]");
    } else {
      const double start = std::get<FreeIv>(n.iv).initial;
      if (n.members.size() == 1)
        add(ViolationKind::singleton_free_iv,
            "nest '" + n.id + "' has one alternative; its inclusive value must be fixed to 1");
      if (!(start > 0.0))
        add(ViolationKind::free_iv_start,
            "nest '" + n.id + "' has non-positive starting inclusive value");
    }
  }

  for (const auto& a : tree.alternatives) {
    auto it = owners.find(a.id);
    if (it == owners.end()) {
      add(ViolationKind::partition, "alternative '" + a.id + "' belongs to no nest");
    } else if (it->second.size() > 1) {
      std::string where;
      for (const auto& n : it->second) where += (where.empty() ? "" : ", ") + n;
      add(ViolationKind::partition, "alternative '" + a.id + "' belongs to several nests: " + where);
    }
  }

  if (tree.nests.size() < 2 && !tree.plain_mnl)
    add(ViolationKind::too_few_nests, "tree needs at least two nests unless flagged as plain MNL");

  if (!alt_ids.count(spec.base_alternative))
    add(ViolationKind::unknown_base, "base alternative '" + spec.base_alternative + "' is not in the tree");

  std::set<std::pair<std::string, std::string>> pairs;
  std::set<std::string> beta_names;
  for (std::size_t t = 0; t < spec.terms.size(); ++t) {
    const auto& term = spec.terms[t];
    beta_names.insert(term.parameter);
    if (term.applies_to.empty())
      add(ViolationKind::empty_applies_to, "term '" + term.parameter + "' applies to no alternative");
    for (const auto& alt : term.applies_to) {
      if (!alt_ids.count(alt))
        add(ViolationKind::unknown_term_alternative,
            "term '" + term.parameter + "' refers to unknown alternative '" + alt + "'");
      if (term.is_constant() && alt == spec.base_alternative)
        add(ViolationKind::constant_on_base,
            "term '" + term.parameter + "' puts a constant on base alternative '" + alt + "'");
      if (!pairs.insert({term.parameter, alt}).second)
        add(ViolationKind::duplicate_term,
            "parameter '" + term.parameter + "' enters alternative '" + alt + "' more than once");
    }
  }

  for (const auto& n : tree.nests)
    if (n.is_free() && beta_names.count(iv_parameter_name(n)))
      add(ViolationKind::name_collision,
          "coefficient name '" + iv_parameter_name(n) + "' collides with the nest's inclusive value");

  return out;
}

inline void require_valid(const ModelSpec& spec) {
  const auto v = validate_spec(spec);
  if (v.empty()) return;
  std::string msg = "invalid model specification:";
  for (const auto& x : v) msg += "\n  " + x.message;
  input_error(msg);
}

enum class ParamKind { beta, iv };

struct ParamSlot {
  std::string name;
  ParamKind kind = ParamKind::beta;
  std::size_t nest = npos;  // set for iv slots
};

// Betas in order of first appearance among the terms, then free inclusive
// values in nest order.
inline std::vector<ParamSlot> parameter_layout(const ModelSpec& spec) {
  std::vector<ParamSlot> layout;
  std::set<std::string> seen;
  for (const auto& term : spec.terms)
    if (seen.insert(term.parameter).second) layout.push_back({term.parameter, ParamKind::beta, npos});
  for (std::size_t n = 0; n < spec.tree.nests.size(); ++n)
    if (spec.tree.nests[n].is_free())
      layout.push_back({iv_parameter_name(spec.tree.nests[n]), ParamKind::iv, n});
  return layout;
}

struct ParameterVector {
  std::vector<double> values;
  std::vector<ParamSlot> layout;

  std::size_t size() const { return values.size(); }

  std::size_t beta_count() const {
    return static_cast<std::size_t>(std::count_if(
        layout.begin(), layout.end(), [](const ParamSlot& s) { return s.kind == ParamKind::beta; }));
  }

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < layout.size(); ++i)
      if (layout[i].name == name) return i;
    return std::nullopt;
  }

  double at(std::string_view name) const {
    auto i = index_of(name);
    if (!i) input_error("unknown parameter '" + std::string(name) + "'");
    return values[*i];
  }
};

inline ParameterVector pack_parameters(const ModelSpec& spec, const std::map<std::string, double>& named) {
  ParameterVector pv;
  pv.layout = parameter_layout(spec);
  std::vector<std::string> missing;
  std::set<std::string> expected;
  for (const auto& slot : pv.layout) {
    expected.insert(slot.name);
    auto it = named.find(slot.name);
    if (it == named.end()) {
      missing.push_back(slot.name);
    } else {
      pv.values.push_back(it->second);
    }
  }
  std::vector<std::string> extra;
  for (const auto& [name, _] : named)
    if (!expected.count(name)) extra.push_back(name);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "parameter names do not match the model:";
    if (!missing.empty()) {
      msg += " missing [";
      for (std::size_t i = 0; i < missing.size(); ++i) msg += (i ? ", " : "") + missing[i];
      msg += "]";
    }
    if (!extra.empty()) {
      msg += " unexpected [";
      for (std::size_t i = 0; i < extra.size(); ++i) msg += (i ? ", " : "") + extra[i];
      msg += "]";
    }
    input_error(msg);
  }
  return pv;
}

inline std::map<std::string, double> unpack_parameters(const ParameterVector& pv) {
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < pv.layout.size(); ++i) out[pv.layout[i].name] = pv.values[i];
  return out;
}

// Documented default start point: betas at zero, free inclusive values at the
// nest's declared initial value (0.5 unless configured).
inline ParameterVector start_parameters(const ModelSpec& spec) {
  ParameterVector pv;
  pv.layout = parameter_layout(spec);
  for (const auto& slot : pv.layout)
    pv.values.push_back(slot.kind == ParamKind::beta
                            ? 0.0
                            : std::get<FreeIv>(spec.tree.nests[slot.nest].iv).initial);
  return pv;
}

}  // namespace nestfit
