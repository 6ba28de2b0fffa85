#pragma once

// BFGS minimizer with a backtracking line search.
//
// A step is accepted on the Armijo sufficient-decrease condition, or, once
// objective differences drop to rounding level, on the approximate Wolfe
// conditions (objective within a few ulps of the start and the directional
// derivative reduced in magnitude). Near a likelihood optimum with 1e5
// observations the second route is what lets the gradient reach 1e-6.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace nestfit {

struct BfgsOptions {
  int max_iterations = 500;
  double gradient_tolerance = 1e-6;
  // Convergence uses gradient_scale * max|g|, so an objective divided by N can
  // still be judged on the unscaled gradient.
  double gradient_scale = 1.0;
  double armijo = 1e-4;
  double wolfe_lower = 0.9;
  double wolfe_upper = 0.8;  // (1 - 2 delta) with delta = 0.1
  double approx_eps = 1e-14;
  int max_backtracks = 60;
};

struct BfgsResult {
  Eigen::VectorXd x;
  Eigen::VectorXd g;
  double f = std::numeric_limits<double>::infinity();
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  std::string message;
  std::vector<double> history;  // objective at every accepted iterate
};

// Objective returns f(x) and fills g; +inf marks an infeasible point.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;
using Hessian = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;
using StopCheck = std::function<std::optional<std::string>(const Eigen::VectorXd&)>;

inline BfgsResult minimize_bfgs(const Objective& objective, Eigen::VectorXd x0, const BfgsOptions& opt,
                                const Hessian& hessian = {}, const StopCheck& stop = {}) {
  const Eigen::Index n = x0.size();
  BfgsResult r;
  r.x = std::move(x0);
  r.g = Eigen::VectorXd::Zero(n);
  r.f = objective(r.x, r.g);
  r.evaluations = 1;
  if (!std::isfinite(r.f)) {
    r.message = "objective is not finite at the start point";
    return r;
  }
  r.history.push_back(r.f);
  auto grad_norm = [&](const Eigen::VectorXd& g) {
    return n == 0 ? 0.0 : opt.gradient_scale * g.cwiseAbs().maxCoeff();
  };
  if (grad_norm(r.g) < opt.gradient_tolerance) {
    r.converged = true;
    r.message = "gradient below tolerance at start";
    return r;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  bool used_exact_curvature = false;
  Eigen::VectorXd x_new(n), g_new(n);

  auto exact_inverse = [&](const Eigen::VectorXd& x) -> std::optional<Eigen::MatrixXd> {
    if (!hessian) return std::nullopt;
    Eigen::MatrixXd h = hessian(x);
    h = 0.5 * (h + h.transpose());
    Eigen::LLT<Eigen::MatrixXd> llt(h);
    if (llt.info() != Eigen::Success) return std::nullopt;
    return llt.solve(Eigen::MatrixXd::Identity(n, n));
  };

  while (r.iterations < opt.max_iterations) {
    Eigen::VectorXd d = -H * r.g;
    double slope = r.g.dot(d);
    if (!(slope < 0.0)) {
      H.setIdentity();
      d = -r.g;
      slope = r.g.dot(d);
    }
    double alpha = 1.0;
    if (!scaled) alpha = std::min(1.0, 1.0 / std::max(1e-300, d.cwiseAbs().maxCoeff()));

    bool accepted = false;
    double f_new = 0.0;
    for (int bt = 0; bt < opt.max_backtracks; ++bt) {
      x_new = r.x + alpha * d;
      f_new = objective(x_new, g_new);
      ++r.evaluations;
      if (std::isfinite(f_new)) {
        const double slope_new = g_new.dot(d);
        const bool armijo = f_new <= r.f + opt.armijo * alpha * slope;
        const bool approx_wolfe = f_new <= r.f + opt.approx_eps * std::abs(r.f) &&
                                  slope_new >= opt.wolfe_lower * slope && slope_new <= -opt.wolfe_upper * slope;
        if (armijo || approx_wolfe) {
          accepted = true;
          break;
        }
        // Safeguarded quadratic interpolation on the step length.
        const double denom = 2.0 * (f_new - r.f - alpha * slope);
        double next = denom > 0.0 ? -slope * alpha * alpha / denom : 0.5 * alpha;
        alpha = std::clamp(next, 0.1 * alpha, 0.5 * alpha);
      } else {
        alpha *= 0.25;
      }
    }

    if (!accepted) {
      if (!used_exact_curvature) {
        if (auto inv = exact_inverse(r.x)) {
          H = *inv;
          used_exact_curvature = true;
          scaled = true;
          continue;
        }
      }
      r.message = "line search failed to find an acceptable step";
      return r;
    }

    const Eigen::VectorXd s = x_new - r.x;
    const Eigen::VectorXd y = g_new - r.g;
    r.x = x_new;
    r.g = g_new;
    r.f = f_new;
    ++r.iterations;
    r.history.push_back(r.f);
    used_exact_curvature = false;

    if (grad_norm(r.g) < opt.gradient_tolerance) {
      r.converged = true;
      r.message = "gradient below tolerance";
      return r;
    }
    if (stop) {
      if (auto why = stop(r.x)) {
        r.message = *why;
        return r;
      }
    }

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      H += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  r.message = "iteration limit reached";
  return r;
}

}  // namespace nestfit
