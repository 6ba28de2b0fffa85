#pragma once

// Nested logit probabilities, log-likelihood, analytic score and simulation.
//
// With lambda_n the inclusive value parameter of nest n:
//   IV_n      = log sum_{j in n} exp(V_j / lambda_n)
//   P(j | n)  = exp(V_j / lambda_n - IV_n)
//   P(n)      = exp(lambda_n IV_n) / sum_m exp(lambda_m IV_m)
//   P(j)      = P(n) P(j | n)
// Utilities are shifted by their per-observation maximum before any
// exponential is taken; every probability is invariant to that shift.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "nestfit/design.hpp"
#include "nestfit/error.hpp"
#include "nestfit/model.hpp"

namespace nestfit {

struct ReductionPolicy {
  bool deterministic = true;
  unsigned threads = 1;
};

// Alternative/nest bookkeeping resolved once per tree.
struct NestStructure {
  std::vector<std::size_t> nest_of;                 // per alternative
  std::vector<std::vector<std::size_t>> members;    // per nest, alternative indices
  std::vector<std::size_t> free_slot;               // per nest, index into theta or npos
  std::vector<double> fixed_value;                  // per nest, used when free_slot == npos

  NestStructure() = default;
  NestStructure(const NestTree& tree, std::size_t n_beta) {
    nest_of.assign(tree.size(), npos);
    std::size_t next = n_beta;
    for (std::size_t n = 0; n < tree.nests.size(); ++n) {
      const auto& nest = tree.nests[n];
      std::vector<std::size_t> idx;
      for (const auto& m : nest.members) {
        auto j = tree.index_of(m);
        if (!j) input_error("nest '" + nest.id + "' lists unknown alternative '" + m + "'");
        nest_of[*j] = n;
        idx.push_back(*j);
      }
      members.push_back(std::move(idx));
      if (nest.is_free()) {
        free_slot.push_back(next++);
        fixed_value.push_back(0.0);
      } else {
        free_slot.push_back(npos);
        fixed_value.push_back(std::get<FixedIv>(nest.iv).value);
      }
    }
    for (std::size_t j = 0; j < nest_of.size(); ++j)
      if (nest_of[j] == npos) input_error("alternative '" + tree.alternatives[j].id + "' belongs to no nest");
  }

  std::size_t nests() const { return members.size(); }
  std::size_t alternatives() const { return nest_of.size(); }

  std::vector<double> lambdas(std::span<const double> theta) const {
    std::vector<double> out(nests());
    for (std::size_t n = 0; n < nests(); ++n) {
      const double l = free_slot[n] == npos ? fixed_value[n] : theta[free_slot[n]];
      if (!(l > 0.0) || !std::isfinite(l))
        numeric_error("inclusive value parameter of nest " + std::to_string(n) + " is " + std::to_string(l) +
                      "; it must be positive");
      out[n] = l;
    }
    return out;
  }
};

namespace detail {

// Per-observation nest quantities, computed from shifted utilities.
struct NestEval {
  std::vector<double> iv, log_nest, nest_prob, cond;

  void resize(std::size_t n_alt, std::size_t n_nest) {
    iv.resize(n_nest);
    log_nest.resize(n_nest);
    nest_prob.resize(n_nest);
    cond.resize(n_alt);
  }

  void run(std::span<const double> v, std::span<const double> lambda, const NestStructure& st) {
    const std::size_t m = st.nests();
    double wmax = -INFINITY;
    for (std::size_t n = 0; n < m; ++n) {
      const double l = lambda[n];
      double amax = -INFINITY;
      for (auto j : st.members[n]) amax = std::max(amax, v[j] / l);
      double s = 0.0;
      for (auto j : st.members[n]) s += std::exp(v[j] / l - amax);
      iv[n] = amax + std::log(s);
      if (st.members[n].size() == 1) {
        cond[st.members[n][0]] = 1.0;
      } else {
        for (auto j : st.members[n]) cond[j] = std::exp(v[j] / l - iv[n]);
      }
      wmax = std::max(wmax, l * iv[n]);
    }
    double s = 0.0;
    for (std::size_t n = 0; n < m; ++n) s += std::exp(lambda[n] * iv[n] - wmax);
    const double lse = wmax + std::log(s);
    for (std::size_t n = 0; n < m; ++n) {
      log_nest[n] = lambda[n] * iv[n] - lse;
      nest_prob[n] = std::exp(log_nest[n]);
    }
  }
};

// Fills v with shifted utilities; returns the shift.
inline double shifted_utilities(std::span<const double> theta, const DesignMatrix& dm, std::size_t obs,
                                std::span<double> v) {
  double vmax = -INFINITY;
  for (std::size_t j = 0; j < v.size(); ++j) {
    v[j] = dm.utility(theta, obs, j);
    if (!std::isfinite(v[j]))
      numeric_error("observation " + std::to_string(obs) + ": non-finite utility for alternative " +
                    std::to_string(j));
    vmax = std::max(vmax, v[j]);
  }
  for (auto& x : v) x -= vmax;
  return vmax;
}

// Log-probability of the chosen alternative; when score is non-empty the
// observation's gradient is added to it.
inline double observation_term(std::span<const double> theta, std::span<const double> lambda,
                               const DesignMatrix& dm, const NestStructure& st, std::size_t obs,
                               std::size_t choice, std::vector<double>& v, NestEval& ev,
                               std::vector<double>& coef, std::span<double> score) {
  const std::size_t J = st.alternatives();
  shifted_utilities(theta, dm, obs, v);
  ev.run(v, lambda, st);
  const std::size_t m = st.nest_of[choice];
  const double lm = lambda[m];
  const double ll = ev.log_nest[m] + v[choice] / lm - ev.iv[m];
  if (score.empty()) return ll;

  // d log P_c / d V_j
  for (std::size_t j = 0; j < J; ++j) {
    const std::size_t n = st.nest_of[j];
    double c = -ev.nest_prob[n] * ev.cond[j];
    if (n == m) c += (lm - 1.0) / lm * ev.cond[j];
    if (j == choice) c += 1.0 / lm;
    coef[j] = c;
  }
  for (std::size_t j = 0; j < J; ++j)
    for (const auto& e : dm.row(obs, j)) score[e.slot] += coef[j] * e.value;

  for (std::size_t n = 0; n < st.nests(); ++n) {
    const std::size_t slot = st.free_slot[n];
    if (slot == npos) continue;
    const double l = lambda[n];
    double vbar = 0.0;
    for (auto j : st.members[n]) vbar += ev.cond[j] * v[j];
    double g = -ev.nest_prob[n] * (ev.iv[n] - vbar / l);
    if (n == m) g += -v[choice] / (l * l) + ev.iv[n] - (l - 1.0) * vbar / (l * l);
    score[slot] += g;
  }
  return ll;
}

// Splits observations into fixed blocks so the reduction order never depends
// on the number of threads.
template <class BlockFn>
void for_blocks(std::size_t n_obs, const ReductionPolicy& policy, BlockFn&& fn) {
  constexpr std::size_t kBlock = 4096;
  const std::size_t n_blocks = (n_obs + kBlock - 1) / kBlock;
  const unsigned threads =
      policy.deterministic ? 1u : std::max(1u, std::min<unsigned>(policy.threads, static_cast<unsigned>(n_blocks)));
  auto run_range = [&](std::size_t first_block, std::size_t stride) {
    for (std::size_t b = first_block; b < n_blocks; b += stride)
      fn(b, b * kBlock, std::min(n_obs, (b + 1) * kBlock));
  };
  if (threads <= 1) {
    run_range(0, 1);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex mu;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        run_range(t, threads);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::size_t block_count(std::size_t n_obs) { return (n_obs + 4095) / 4096; }

inline void check_inputs(std::span<const double> theta, const DesignMatrix& dm, const NestStructure& st,
                         std::span<const std::size_t> choices) {
  if (dm.alternatives() != st.alternatives())
    input_error("design has " + std::to_string(dm.alternatives()) + " alternatives but the tree has " +
                std::to_string(st.alternatives()));
  if (theta.size() < dm.beta_count()) input_error("parameter vector shorter than the design's beta count");
  if (!choices.empty()) {
    if (choices.size() != dm.observations())
      input_error("got " + std::to_string(choices.size()) + " choices for " + std::to_string(dm.observations()) +
                  " observations");
    for (std::size_t i = 0; i < choices.size(); ++i)
      if (choices[i] >= st.alternatives())
        input_error("observation " + std::to_string(i) + ": chosen index " + std::to_string(choices[i]) +
                    " out of range");
  }
}

}  // namespace detail

struct ProbabilityResult {
  std::size_t n_obs = 0, n_alt = 0, n_nest = 0;
  std::vector<double> prob;         // n_obs x n_alt
  std::vector<double> conditional;  // n_obs x n_alt, P(j | nest of j)
  std::vector<double> nest_prob;    // n_obs x n_nest
  std::vector<double> logsum;       // n_obs x n_nest, unshifted IV_n

  double p(std::size_t i, std::size_t j) const { return prob[i * n_alt + j]; }
  double p_cond(std::size_t i, std::size_t j) const { return conditional[i * n_alt + j]; }
  double p_nest(std::size_t i, std::size_t n) const { return nest_prob[i * n_nest + n]; }
  double iv(std::size_t i, std::size_t n) const { return logsum[i * n_nest + n]; }
  std::span<const double> row(std::size_t i) const { return {prob.data() + i * n_alt, n_alt}; }
};

inline ProbabilityResult choice_probabilities(std::span<const double> theta, const DesignMatrix& dm,
                                              const NestTree& tree) {
  const NestStructure st(tree, dm.beta_count());
  detail::check_inputs(theta, dm, st, {});
  const auto lambda = st.lambdas(theta);
  ProbabilityResult r;
  r.n_obs = dm.observations();
  r.n_alt = st.alternatives();
  r.n_nest = st.nests();
  r.prob.resize(r.n_obs * r.n_alt);
  r.conditional.resize(r.n_obs * r.n_alt);
  r.nest_prob.resize(r.n_obs * r.n_nest);
  r.logsum.resize(r.n_obs * r.n_nest);
  std::vector<double> v(r.n_alt);
  detail::NestEval ev;
  ev.resize(r.n_alt, r.n_nest);
  for (std::size_t i = 0; i < r.n_obs; ++i) {
    const double shift = detail::shifted_utilities(theta, dm, i, v);
    ev.run(v, lambda, st);
    for (std::size_t n = 0; n < r.n_nest; ++n) {
      r.nest_prob[i * r.n_nest + n] = ev.nest_prob[n];
      r.logsum[i * r.n_nest + n] = ev.iv[n] + shift / lambda[n];
    }
    for (std::size_t j = 0; j < r.n_alt; ++j) {
      const double pn = ev.nest_prob[st.nest_of[j]];
      r.conditional[i * r.n_alt + j] = ev.cond[j];
      r.prob[i * r.n_alt + j] = pn * ev.cond[j];
    }
  }
  return r;
}

inline ProbabilityResult choice_probabilities(const ParameterVector& params, const DesignMatrix& dm,
                                              const NestTree& tree) {
  return choice_probabilities(std::span<const double>(params.values), dm, tree);
}

// Log-likelihood and (optionally) its gradient in one pass.
inline double log_likelihood_and_gradient(std::span<const double> theta, const DesignMatrix& dm,
                                          const NestStructure& st, std::span<const std::size_t> choices,
                                          std::span<double> grad, const ReductionPolicy& policy = {}) {
  detail::check_inputs(theta, dm, st, choices);
  const auto lambda = st.lambdas(theta);
  const std::size_t K = theta.size();
  const std::size_t n_blocks = detail::block_count(dm.observations());
  std::vector<double> block_ll(n_blocks, 0.0);
  std::vector<std::vector<double>> block_grad(grad.empty() ? 0 : n_blocks);
  detail::for_blocks(dm.observations(), policy, [&](std::size_t b, std::size_t lo, std::size_t hi) {
    std::vector<double> v(st.alternatives()), coef(st.alternatives());
    detail::NestEval ev;
    ev.resize(st.alternatives(), st.nests());
    std::span<double> g;
    if (!grad.empty()) {
      block_grad[b].assign(K, 0.0);
      g = block_grad[b];
    }
    double ll = 0.0;
    for (std::size_t i = lo; i < hi; ++i)
      ll += detail::observation_term(theta, lambda, dm, st, i, choices[i], v, ev, coef, g);
    block_ll[b] = ll;
  });
  double ll = 0.0;
  for (double x : block_ll) ll += x;
  if (!grad.empty()) {
    std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& bg : block_grad)
      for (std::size_t k = 0; k < K; ++k) grad[k] += bg[k];
  }
  return ll;
}

inline double log_likelihood(const ParameterVector& params, const DesignMatrix& dm, const NestTree& tree,
                             std::span<const std::size_t> choices, const ReductionPolicy& policy = {}) {
  const NestStructure st(tree, dm.beta_count());
  return log_likelihood_and_gradient(params.values, dm, st, choices, {}, policy);
}

inline std::vector<double> gradient(const ParameterVector& params, const DesignMatrix& dm, const NestTree& tree,
                                    std::span<const std::size_t> choices, const ReductionPolicy& policy = {}) {
  const NestStructure st(tree, dm.beta_count());
  std::vector<double> g(params.size(), 0.0);
  log_likelihood_and_gradient(params.values, dm, st, choices, g, policy);
  return g;
}

// Sum over observations of score outer products (row-major K x K).
inline std::vector<double> score_outer_product(std::span<const double> theta, const DesignMatrix& dm,
                                               const NestStructure& st, std::span<const std::size_t> choices) {
  detail::check_inputs(theta, dm, st, choices);
  const auto lambda = st.lambdas(theta);
  const std::size_t K = theta.size();
  std::vector<double> out(K * K, 0.0), g(K), v(st.alternatives()), coef(st.alternatives());
  detail::NestEval ev;
  ev.resize(st.alternatives(), st.nests());
  for (std::size_t i = 0; i < dm.observations(); ++i) {
    std::fill(g.begin(), g.end(), 0.0);
    detail::observation_term(theta, lambda, dm, st, i, choices[i], v, ev, coef, g);
    for (std::size_t a = 0; a < K; ++a) {
      if (g[a] == 0.0) continue;
      for (std::size_t b = a; b < K; ++b) out[a * K + b] += g[a] * g[b];
    }
  }
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < a; ++b) out[a * K + b] = out[b * K + a];
  return out;
}

// mt19937_64 with 53-bit uniforms built from the top bits of each draw, so a
// seed gives the same stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

inline constexpr const char* kRngName = "mt19937_64 (53-bit uniforms from the top bits)";

struct SimOutput {
  std::vector<std::size_t> chosen;
  std::uint64_t seed = 0;
  ParameterVector truth;
};

inline std::size_t draw_index(std::span<const double> probs, double u) {
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < probs.size(); ++j) {
    acc += probs[j];
    if (u < acc) return j;
  }
  return probs.size() - 1;
}

// Inverse-CDF draw of one alternative per observation.
inline SimOutput simulate(const ParameterVector& params, const DesignMatrix& dm, const NestTree& tree,
                          std::uint64_t seed) {
  const auto pr = choice_probabilities(params, dm, tree);
  SimOutput out;
  out.seed = seed;
  out.truth = params;
  out.chosen.reserve(pr.n_obs);
  Rng rng(seed);
  for (std::size_t i = 0; i < pr.n_obs; ++i) out.chosen.push_back(draw_index(pr.row(i), rng.uniform()));
  return out;
}

}  // namespace nestfit
