#pragma once

// Shared fixtures and independent reference evaluations for the test suites.

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "nestfit/nestfit.hpp"

namespace support {

using namespace nestfit;
using hp = boost::multiprecision::cpp_bin_float_50;

inline const std::vector<std::string> kSeverity = {"pdo", "possible_injury", "incapacitating_injury",
                                                   "severe_injury", "fatality"};

inline NestTree severity_tree() {
  return NestTree::from_ids(kSeverity, {{"class1", {"severe_injury", "fatality"}, FreeIv{}},
                                        {"class2", {"possible_injury", "incapacitating_injury"}, FreeIv{}},
                                        {"class3", {"pdo"}, FixedIv{1.0}}});
}

// Severity tree with constants only; utilities equal the constants.
inline ModelSpec severity_constants_spec() {
  ModelSpec spec;
  spec.tree = severity_tree();
  spec.base_alternative = "fatality";
  for (std::size_t j = 0; j + 1 < kSeverity.size(); ++j)
    spec.terms.push_back({"asc_" + kSeverity[j], std::string(kConstant), {kSeverity[j]}});
  return spec;
}

inline std::string models_dir() { return NESTFIT_MODELS_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("nestfit_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

// Utilities computed straight from the dataset columns and named parameters.
inline std::vector<double> direct_utilities(const ModelSpec& spec, const Dataset& ds,
                                            const std::map<std::string, double>& beta, std::size_t row) {
  std::vector<double> v(spec.tree.size(), 0.0);
  for (const auto& t : spec.terms) {
    const double x = t.is_constant() ? 1.0 : ds.numeric(t.covariate)[row];
    for (const auto& a : t.applies_to) {
      std::size_t j = 0;
      while (spec.tree.alternatives[j].id != a) ++j;
      v[j] += beta.at(t.parameter) * x;
    }
  }
  return v;
}

inline std::vector<double> direct_mnl(const std::vector<double>& v) {
  long double m = v[0];
  for (double x : v) m = std::max<long double>(m, x);
  long double s = 0;
  for (double x : v) s += std::exp(static_cast<long double>(x) - m);
  std::vector<double> p;
  for (double x : v) p.push_back(static_cast<double>(std::exp(static_cast<long double>(x) - m) / s));
  return p;
}

// P_i = e^{V_i/l} S_n^{l-1} / sum_m S_m^{l_m}, S_n = sum_{j in n} e^{V_j/l_n},
// evaluated in 50-digit arithmetic without any shifting.
inline std::vector<double> high_precision_nested(const NestTree& tree, const std::vector<double>& v,
                                                 const std::vector<double>& lambda) {
  std::vector<hp> s(tree.nests.size());
  std::vector<std::size_t> owner(tree.size());
  for (std::size_t n = 0; n < tree.nests.size(); ++n)
    for (const auto& m : tree.nests[n].members) {
      const auto j = *tree.index_of(m);
      owner[j] = n;
      s[n] += exp(hp(v[j]) / hp(lambda[n]));
    }
  hp denom = 0;
  for (std::size_t n = 0; n < s.size(); ++n) denom += pow(s[n], hp(lambda[n]));
  std::vector<double> p(tree.size());
  for (std::size_t j = 0; j < tree.size(); ++j) {
    const auto n = owner[j];
    p[j] = static_cast<double>(exp(hp(v[j]) / hp(lambda[n])) * pow(s[n], hp(lambda[n]) - 1) / denom);
  }
  return p;
}

struct Instance {
  ModelSpec spec;
  Dataset data;
  ParameterVector params;
  std::map<std::string, double> named;
};

struct InstanceShape {
  std::size_t max_alternatives = 7;
  std::size_t max_covariates = 4;
  std::size_t observations = 20;
  std::size_t max_parameters = 1000;
  double lambda_lo = 0.1, lambda_hi = 1.0;
  bool all_lambda_one = false;
  double beta_scale = 1.5;
  double covariate_scale = 2.0;
};

// Random valid tree, terms, design and parameters.
inline Instance random_instance(std::mt19937_64& gen, const InstanceShape& shape = {}) {
  auto unif = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen); };
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(gen); };
  Instance in;
  const std::size_t J = pick(2, shape.max_alternatives);
  std::vector<std::string> ids;
  for (std::size_t j = 0; j < J; ++j) ids.push_back("a" + std::to_string(j));
  const std::size_t n_nests = pick(2, J);
  std::vector<std::size_t> order(J);
  for (std::size_t j = 0; j < J; ++j) order[j] = j;
  std::shuffle(order.begin(), order.end(), gen);
  std::vector<std::vector<std::string>> members(n_nests);
  for (std::size_t j = 0; j < J; ++j) members[j < n_nests ? j : pick(0, n_nests - 1)].push_back(ids[order[j]]);
  std::vector<Nest> nests;
  for (std::size_t n = 0; n < n_nests; ++n) {
    Nest nest{"n" + std::to_string(n), members[n], FixedIv{1.0}};
    if (members[n].size() > 1) nest.iv = FreeIv{};
    nests.push_back(nest);
  }
  in.spec.tree = NestTree::from_ids(ids, nests);
  in.spec.base_alternative = ids.back();
  for (std::size_t j = 0; j + 1 < J; ++j) in.spec.terms.push_back({"asc_" + ids[j], std::string(kConstant), {ids[j]}});
  const std::size_t n_cov = pick(1, shape.max_covariates);
  for (std::size_t c = 0; c < n_cov; ++c) {
    const auto cov = "x" + std::to_string(c);
    std::vector<std::string> alts;
    for (const auto& id : ids)
      if (unif(0, 1) < 0.5) alts.push_back(id);
    if (alts.empty()) alts.push_back(ids[pick(0, J - 1)]);
    in.spec.terms.push_back({"b_" + cov, cov, alts});
  }
  while (parameter_layout(in.spec).size() > shape.max_parameters && in.spec.terms.size() > 1) in.spec.terms.pop_back();

  in.data.alternatives = ids;
  const std::size_t N = shape.observations;
  for (std::size_t c = 0; c < n_cov; ++c) {
    std::vector<double> col(N);
    for (auto& x : col) x = unif(-shape.covariate_scale, shape.covariate_scale);
    in.data.add_numeric("x" + std::to_string(c), std::move(col));
  }
  in.data.chosen.resize(N);
  for (auto& c : in.data.chosen) c = pick(0, J - 1);

  in.params = start_parameters(in.spec);
  for (std::size_t k = 0; k < in.params.size(); ++k) {
    in.params.values[k] = in.params.layout[k].kind == ParamKind::beta
                              ? unif(-shape.beta_scale, shape.beta_scale)
                              : (shape.all_lambda_one ? 1.0 : unif(shape.lambda_lo, shape.lambda_hi));
  }
  in.named = unpack_parameters(in.params);
  return in;
}

inline std::vector<double> lambdas_of(const Instance& in) {
  std::vector<double> out;
  for (const auto& n : in.spec.tree.nests)
    out.push_back(n.is_free() ? in.named.at(iv_parameter_name(n)) : std::get<FixedIv>(n.iv).value);
  return out;
}

}  // namespace support
