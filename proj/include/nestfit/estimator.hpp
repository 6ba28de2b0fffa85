#pragma once

// Maximum-likelihood fitting of a nested logit specification, with standard
// errors, significance stars, goodness of fit and inclusive value checks.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nestfit/dataset.hpp"
#include "nestfit/design.hpp"
#include "nestfit/kernel.hpp"
#include "nestfit/model.hpp"
#include "nestfit/optimizer.hpp"

namespace nestfit {

enum class IvParameterization { direct, logistic };
enum class NullModel { equal_shares, constants_only };
enum class SeMethod { outer_product, numeric_hessian };

inline const char* to_string(NullModel m) { return m == NullModel::equal_shares ? "equal_shares" : "constants_only"; }
inline const char* to_string(SeMethod m) { return m == SeMethod::outer_product ? "outer_product" : "numeric_hessian"; }
inline const char* to_string(IvParameterization m) { return m == IvParameterization::direct ? "direct" : "logistic"; }

struct FitOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;  // max-norm of the log-likelihood gradient
  IvParameterization iv_parameterization = IvParameterization::direct;
  NullModel null_model = NullModel::equal_shares;
  SeMethod se_method = SeMethod::outer_product;
  ReductionPolicy reduction{};
  double separation_cap = 30.0;  // |beta| beyond this stops the fit

  void check() const {
    if (max_iterations < 1) input_error("max_iterations must be at least 1");
    if (!(gradient_tolerance > 0.0)) input_error("gradient_tolerance must be positive");
    if (!(separation_cap > 0.0)) input_error("separation_cap must be positive");
  }
};

// |t| >= 2.576 -> ***, >= 1.960 -> **, >= 1.645 -> * (two-sided normal at
// 1, 5 and 10 percent).
inline std::string significance_stars(double t) {
  const double a = std::abs(t);
  if (!std::isfinite(a)) return "";
  if (a >= 2.576) return "***";
  if (a >= 1.960) return "**";
  if (a >= 1.645) return "*";
  return "";
}

inline double t_statistic(double estimate, double se) {
  if (!(se > 0.0) || !std::isfinite(se)) return std::numeric_limits<double>::quiet_NaN();
  return estimate / se;
}

struct ParameterEstimate {
  std::string name;
  ParamKind kind = ParamKind::beta;
  double estimate = 0.0;
  double std_error = std::numeric_limits<double>::quiet_NaN();
  double t_stat = std::numeric_limits<double>::quiet_NaN();
  std::string stars;
};

struct IvReportEntry {
  std::string nest;
  bool fixed = false;
  double estimate = 1.0;
  double std_error = std::numeric_limits<double>::quiet_NaN();
  bool within_unit_interval = true;  // estimate in (0, 1]
  double distance_from_1 = 0.0;
};

struct SeparationFlag {
  std::string parameter;
  double magnitude = 0.0;
};

struct EstimationResult {
  std::vector<ParameterEstimate> parameters;
  double ll_final = 0.0;
  double ll_null = 0.0;
  double ll_start = 0.0;
  double pseudo_adjusted_r2 = 0.0;
  std::vector<IvReportEntry> iv_report;
  bool converged = false;
  int iterations = 0;
  std::size_t sample_size = 0;
  double gradient_max_norm = 0.0;
  std::string message;
  std::vector<std::string> warnings;
  std::vector<SeparationFlag> separation;
  NullModel null_model = NullModel::equal_shares;
  SeMethod se_method = SeMethod::outer_product;
  std::vector<double> ll_history;  // log-likelihood at each accepted iterate
  std::vector<std::size_t> chosen_counts;

  const ParameterEstimate* find(const std::string& name) const {
    for (const auto& p : parameters)
      if (p.name == name) return &p;
    return nullptr;
  }

  const ParameterEstimate& at(const std::string& name) const {
    const auto* p = find(name);
    if (!p) input_error("result has no parameter '" + name + "'");
    return *p;
  }

  std::size_t free_parameter_count() const { return parameters.size(); }
};

// McFadden pseudo adjusted R^2: 1 - (LL(final) - K) / LL(null).
inline double pseudo_adjusted_r2(double ll_final, double ll_null, double k_params) {
  if (ll_null == 0.0) input_error("null log-likelihood is zero; pseudo R^2 is undefined");
  return 1.0 - (ll_final - k_params) / ll_null;
}

inline double null_log_likelihood(NullModel model, const std::vector<std::size_t>& counts) {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  if (model == NullModel::equal_shares)
    return static_cast<double>(n) * std::log(1.0 / static_cast<double>(counts.size()));
  double ll = 0.0;
  for (auto c : counts)
    if (c > 0) ll += static_cast<double>(c) * std::log(static_cast<double>(c) / static_cast<double>(n));
  return ll;
}

namespace detail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Maps the optimizer's coordinates to model parameters and back.
struct Reparam {
  std::vector<bool> is_iv;
  bool logistic_iv = false;

  std::vector<double> to_model(const Eigen::VectorXd& x) const {
    std::vector<double> theta(static_cast<std::size_t>(x.size()));
    for (std::size_t k = 0; k < theta.size(); ++k)
      theta[k] = (logistic_iv && is_iv[k]) ? logistic(x[static_cast<Eigen::Index>(k)]) : x[static_cast<Eigen::Index>(k)];
    return theta;
  }

  Eigen::VectorXd from_model(const std::vector<double>& theta) const {
    Eigen::VectorXd x(static_cast<Eigen::Index>(theta.size()));
    for (std::size_t k = 0; k < theta.size(); ++k)
      x[static_cast<Eigen::Index>(k)] =
          (logistic_iv && is_iv[k]) ? std::log(theta[k] / (1.0 - theta[k])) : theta[k];
    return x;
  }

  // d theta_k / d x_k
  Eigen::VectorXd jacobian(const std::vector<double>& theta) const {
    Eigen::VectorXd j = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(theta.size()));
    for (std::size_t k = 0; k < theta.size(); ++k)
      if (logistic_iv && is_iv[k]) j[static_cast<Eigen::Index>(k)] = theta[k] * (1.0 - theta[k]);
    return j;
  }
};

inline std::optional<Eigen::MatrixXd> invert_spd(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::LDLT<Eigen::MatrixXd> ldlt(sym);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return std::nullopt;
  const auto d = ldlt.vectorD();
  if (d.size() > 0 && d.minCoeff() <= d.cwiseAbs().maxCoeff() * 1e-14) return std::nullopt;
  return ldlt.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace detail

// Negated Hessian of the log-likelihood by central differences of the
// analytic gradient.
inline Eigen::MatrixXd numeric_information(const std::vector<double>& theta, const DesignMatrix& dm,
                                           const NestStructure& st, std::span<const std::size_t> choices,
                                           const ReductionPolicy& policy) {
  const std::size_t K = theta.size();
  Eigen::MatrixXd h(K, K);
  std::vector<double> tp(theta), gp(K), gm(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double step = 1e-5 * std::max(1.0, std::abs(theta[k]));
    tp[k] = theta[k] + step;
    log_likelihood_and_gradient(tp, dm, st, choices, gp, policy);
    tp[k] = theta[k] - step;
    log_likelihood_and_gradient(tp, dm, st, choices, gm, policy);
    tp[k] = theta[k];
    for (std::size_t a = 0; a < K; ++a) h(a, k) = -(gp[a] - gm[a]) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

inline EstimationResult fit(const ModelSpec& spec, const Dataset& data, const FitOptions& options = {}) {
  options.check();
  require_valid(spec);
  if (data.alternatives.size() != spec.tree.size())
    input_error("dataset has " + std::to_string(data.alternatives.size()) + " alternatives, model has " +
                std::to_string(spec.tree.size()));
  for (std::size_t j = 0; j < spec.tree.size(); ++j)
    if (data.alternatives[j] != spec.tree.alternatives[j].id)
      input_error("dataset alternative '" + data.alternatives[j] + "' does not match model alternative '" +
                  spec.tree.alternatives[j].id + "' at position " + std::to_string(j));
  if (data.rows() == 0) input_error("dataset has no observations");

  const auto dm = build_design(spec, data);
  const auto start = start_parameters(spec);
  const NestStructure st(spec.tree, dm.beta_count());
  const std::size_t K = start.size();
  const auto N = static_cast<double>(data.rows());
  std::span<const std::size_t> choices(data.chosen);

  EstimationResult res;
  res.sample_size = data.rows();
  res.null_model = options.null_model;
  res.se_method = options.se_method;
  res.chosen_counts.assign(spec.tree.size(), 0);
  for (auto c : data.chosen) ++res.chosen_counts[c];
  res.ll_null = null_log_likelihood(options.null_model, res.chosen_counts);
  res.ll_start = log_likelihood_and_gradient(start.values, dm, st, choices, {}, options.reduction);

  auto fill_parameters = [&](const std::vector<double>& theta, const std::optional<Eigen::MatrixXd>& cov) {
    res.parameters.clear();
    for (std::size_t k = 0; k < K; ++k) {
      ParameterEstimate p;
      p.name = start.layout[k].name;
      p.kind = start.layout[k].kind;
      p.estimate = theta[k];
      if (cov) {
        const double var = (*cov)(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
        if (var > 0.0 && std::isfinite(var)) p.std_error = std::sqrt(var);
      }
      p.t_stat = t_statistic(p.estimate, p.std_error);
      p.stars = significance_stars(p.t_stat);
      res.parameters.push_back(std::move(p));
    }
    res.iv_report.clear();
    for (std::size_t n = 0; n < spec.tree.nests.size(); ++n) {
      const auto& nest = spec.tree.nests[n];
      IvReportEntry e;
      e.nest = nest.id;
      e.fixed = !nest.is_free();
      if (e.fixed) {
        e.estimate = std::get<FixedIv>(nest.iv).value;
      } else {
        const auto k = st.free_slot[n];
        e.estimate = theta[k];
        e.std_error = res.parameters[k].std_error;
      }
      e.within_unit_interval = e.estimate > 0.0 && e.estimate <= 1.0;
      e.distance_from_1 = std::abs(1.0 - e.estimate);
      res.iv_report.push_back(e);
    }
  };

  for (std::size_t j = 0; j < spec.tree.size(); ++j)
    if (res.chosen_counts[j] == 0)
      res.warnings.push_back("alternative '" + spec.tree.alternatives[j].id + "' is never chosen");

  if (data.distinct_chosen() < 2) {
    const std::string only = spec.tree.alternatives[data.chosen.front()].id;
    res.warnings.push_back("separation: every observation chose '" + only + "'; the model is not identified");
    for (const auto& term : spec.terms)
      if (term.is_constant()) res.separation.push_back({term.parameter, std::numeric_limits<double>::infinity()});
    res.converged = false;
    res.message = "degenerate outcome: fewer than two distinct alternatives chosen";
    res.ll_final = res.ll_start;
    res.ll_history = {res.ll_start};
    fill_parameters(start.values, std::nullopt);
    res.pseudo_adjusted_r2 = pseudo_adjusted_r2(res.ll_final, res.ll_null, static_cast<double>(K));
    return res;
  }

  detail::Reparam rp;
  rp.logistic_iv = options.iv_parameterization == IvParameterization::logistic;
  for (const auto& s : start.layout) rp.is_iv.push_back(s.kind == ParamKind::iv);

  std::vector<double> grad_buf(K);
  Objective objective = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) -> double {
    const auto theta = rp.to_model(x);
    double ll = 0.0;
    try {
      ll = log_likelihood_and_gradient(theta, dm, st, choices, grad_buf, options.reduction);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numeric) return std::numeric_limits<double>::infinity();
      throw;
    }
    if (!std::isfinite(ll)) return std::numeric_limits<double>::infinity();
    const auto jac = rp.jacobian(theta);
    g.resize(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) g[k] = -grad_buf[static_cast<std::size_t>(k)] * jac[k] / N;
    return -ll / N;
  };

  Hessian hessian = [&](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd h(n, n);
    Eigen::VectorXd xp = x, gp(n), gm(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double step = 1e-5 * std::max(1.0, std::abs(x[k]));
      xp[k] = x[k] + step;
      const double fp = objective(xp, gp);
      xp[k] = x[k] - step;
      const double fm = objective(xp, gm);
      xp[k] = x[k];
      if (!std::isfinite(fp) || !std::isfinite(fm)) return Eigen::MatrixXd::Zero(n, n);
      h.col(k) = (gp - gm) / (2.0 * step);
    }
    return h;
  };

  StopCheck stop = [&](const Eigen::VectorXd& x) -> std::optional<std::string> {
    for (std::size_t k = 0; k < K; ++k) {
      if (rp.is_iv[k]) continue;
      const double v = x[static_cast<Eigen::Index>(k)];
      if (std::abs(v) > options.separation_cap) {
        res.separation.push_back({start.layout[k].name, std::abs(v)});
        res.warnings.push_back("separation: '" + start.layout[k].name + "' exceeded magnitude cap " +
                               std::to_string(options.separation_cap));
        return "stopped: coefficient '" + start.layout[k].name + "' diverging (separation)";
      }
    }
    return std::nullopt;
  };

  BfgsOptions bopt;
  bopt.max_iterations = options.max_iterations;
  bopt.gradient_tolerance = options.gradient_tolerance;
  bopt.gradient_scale = N;
  const auto opt = minimize_bfgs(objective, rp.from_model(start.values), bopt, hessian, stop);

  const auto theta = rp.to_model(opt.x);
  std::vector<double> g(K);
  res.ll_final = log_likelihood_and_gradient(theta, dm, st, choices, g, options.reduction);
  res.gradient_max_norm = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    res.gradient_max_norm = std::max(res.gradient_max_norm, std::abs(g[k] * rp.jacobian(theta)[static_cast<Eigen::Index>(k)]));
  res.converged = opt.converged;
  res.iterations = opt.iterations;
  res.message = opt.message;
  for (double f : opt.history) res.ll_history.push_back(-f * N);

  // Covariance in model coordinates; the logistic chain rule cancels out
  // because both estimators are evaluated directly in model coordinates.
  Eigen::MatrixXd info(K, K);
  if (options.se_method == SeMethod::outer_product) {
    const auto opg = score_outer_product(theta, dm, st, choices);
    for (std::size_t a = 0; a < K; ++a)
      for (std::size_t b = 0; b < K; ++b) info(a, b) = opg[a * K + b];
  } else {
    info = numeric_information(theta, dm, st, choices, options.reduction);
  }
  auto cov = detail::invert_spd(info);
  if (!cov && K > 0) res.warnings.push_back("information matrix is singular; standard errors unavailable");
  fill_parameters(theta, cov);

  for (const auto& p : res.parameters) {
    if (p.kind != ParamKind::beta) continue;
    const bool already = std::any_of(res.separation.begin(), res.separation.end(),
                                     [&](const SeparationFlag& s) { return s.parameter == p.name; });
    if (!already && std::abs(p.estimate) > 10.0 && !(p.std_error < std::abs(p.estimate))) {
      res.separation.push_back({p.name, std::abs(p.estimate)});
      res.warnings.push_back("possible separation: '" + p.name + "' is large with a flat likelihood");
    }
  }
  if (res.ll_final < res.ll_null)
    res.warnings.push_back("final log-likelihood is below the null log-likelihood");
  res.pseudo_adjusted_r2 = pseudo_adjusted_r2(res.ll_final, res.ll_null, static_cast<double>(K));
  return res;
}

enum class IvVerdict { valid_strong_correlation, valid_weak_correlation, boundary, violation };

inline const char* to_string(IvVerdict v) {
  switch (v) {
    case IvVerdict::valid_strong_correlation: return "valid_strong_correlation";
    case IvVerdict::valid_weak_correlation: return "valid_weak_correlation";
    case IvVerdict::boundary: return "boundary";
    case IvVerdict::violation: return "violation";
  }
  return "";
}

struct IvCheck {
  std::string nest;
  double estimate = 1.0;
  IvVerdict verdict = IvVerdict::boundary;
};

inline constexpr double kWeakCorrelationThreshold = 0.9;

inline IvVerdict classify_iv(double estimate, bool fixed) {
  if (fixed) return IvVerdict::boundary;
  if (!(estimate > 0.0) || estimate > 1.0) return IvVerdict::violation;
  if (estimate >= kWeakCorrelationThreshold) return IvVerdict::valid_weak_correlation;
  return IvVerdict::valid_strong_correlation;
}

inline std::vector<IvCheck> validate_iv(const EstimationResult& result) {
  std::vector<IvCheck> out;
  for (const auto& e : result.iv_report) out.push_back({e.nest, e.estimate, classify_iv(e.estimate, e.fixed)});
  return out;
}

}  // namespace nestfit
