#include <catch_amalgamated.hpp>

#include "nestfit/optimizer.hpp"

using namespace nestfit;

TEST_CASE("bfgs solves a convex quadratic", "[optimizer]") {
  Eigen::MatrixXd a(3, 3);
  a << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
  Eigen::VectorXd b(3);
  b << 1, -2, 0.5;
  Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = a * x - b;
    return 0.5 * x.dot(a * x) - b.dot(x);
  };
  BfgsOptions opt;
  opt.gradient_tolerance = 1e-10;
  const auto r = minimize_bfgs(f, Eigen::VectorXd::Zero(3), opt);
  REQUIRE(r.converged);
  const Eigen::VectorXd expect = a.ldlt().solve(b);
  CHECK((r.x - expect).norm() < 1e-8);
  for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1] + 1e-12 * std::abs(r.history[i - 1]));
}

TEST_CASE("bfgs solves rosenbrock", "[optimizer]") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(2);
    g[0] = -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] * x[0]);
    g[1] = 200 * (x[1] - x[0] * x[0]);
    return (1 - x[0]) * (1 - x[0]) + 100 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]);
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  BfgsOptions opt;
  opt.gradient_tolerance = 1e-8;
  const auto r = minimize_bfgs(f, x0, opt);
  REQUIRE(r.converged);
  CHECK(std::abs(r.x[0] - 1) < 1e-6);
  CHECK(std::abs(r.x[1] - 1) < 1e-6);
}

TEST_CASE("infeasible trial points are backed away from", "[optimizer]") {
  // -log(x) + x has its minimum at 1 and is undefined for x <= 0.
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    if (x[0] <= 0) return std::numeric_limits<double>::infinity();
    g[0] = -1 / x[0] + 1;
    return -std::log(x[0]) + x[0];
  };
  Eigen::VectorXd x0(1);
  x0 << 0.05;
  const auto r = minimize_bfgs(f, x0, {});
  REQUIRE(r.converged);
  CHECK(std::abs(r.x[0] - 1) < 1e-6);
}

TEST_CASE("gradient scale applies to the convergence test", "[optimizer]") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = x;
    return 0.5 * x.squaredNorm();
  };
  Eigen::VectorXd x0(2);
  x0 << 3, -4;
  BfgsOptions opt;
  opt.gradient_scale = 1e6;
  opt.gradient_tolerance = 1e-6;
  const auto r = minimize_bfgs(f, x0, opt);
  REQUIRE(r.converged);
  CHECK(r.g.cwiseAbs().maxCoeff() * 1e6 < 1e-6);
}

TEST_CASE("stop callback ends the run unconverged", "[optimizer]") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(1);
    g[0] = -1.0;
    return -x[0];
  };
  StopCheck stop = [](const Eigen::VectorXd& x) -> std::optional<std::string> {
    if (x[0] > 30) return std::string("diverging");
    return std::nullopt;
  };
  const auto r = minimize_bfgs(f, Eigen::VectorXd::Zero(1), {}, {}, stop);
  CHECK_FALSE(r.converged);
  CHECK(r.message == "diverging");
}

TEST_CASE("iteration limit is reported", "[optimizer]") {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g.resize(2);
    g[0] = -2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] * x[0]);
    g[1] = 200 * (x[1] - x[0] * x[0]);
    return (1 - x[0]) * (1 - x[0]) + 100 * (x[1] - x[0] * x[0]) * (x[1] - x[0] * x[0]);
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  BfgsOptions opt;
  opt.max_iterations = 3;
  const auto r = minimize_bfgs(f, x0, opt);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 3);
}
