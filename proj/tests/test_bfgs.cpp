#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Dense>

#include "evgp/bfgs.hpp"

using namespace evgp;
using Catch::Matchers::WithinAbs;

TEST_CASE("bfgs minimizes a quadratic") {
    Eigen::Matrix2d A;
    A << 4.0, 1.0, 1.0, 3.0;
    Eigen::Vector2d b(1.0, -2.0);
    auto f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (g) *g = A * x - b;
        return 0.5 * x.dot(A * x) - b.dot(x);
    };
    BfgsOptions opt;
    opt.gradient_tolerance = 1e-12;
    auto res = minimize_bfgs(f, Eigen::VectorXd::Zero(2), opt);
    Eigen::Vector2d expected = A.ldlt().solve(b);
    CHECK(res.converged);
    CHECK_THAT((res.x - expected).norm(), WithinAbs(0.0, 1e-8));
}

TEST_CASE("bfgs solves rosenbrock") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        double a = 1.0 - x[0];
        double b = x[1] - x[0] * x[0];
        if (g) {
            g->resize(2);
            (*g)[0] = -2.0 * a - 400.0 * x[0] * b;
            (*g)[1] = 200.0 * b;
        }
        return a * a + 100.0 * b * b;
    };
    Eigen::VectorXd x0(2);
    x0 << -1.2, 1.0;
    BfgsOptions opt;
    opt.max_iterations = 200;
    opt.gradient_tolerance = 1e-10;
    auto res = minimize_bfgs(f, x0, opt);
    CHECK(res.converged);
    CHECK_THAT(res.x[0], WithinAbs(1.0, 1e-5));
    CHECK_THAT(res.x[1], WithinAbs(1.0, 1e-5));
}

TEST_CASE("accepted bfgs iterates are non-increasing") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        double v = std::pow(x[0] - 3.0, 4) + std::pow(x[1] + 1.0, 2) + 0.3 * x[0] * x[0];
        if (g) {
            g->resize(2);
            (*g)[0] = 4.0 * std::pow(x[0] - 3.0, 3) + 0.6 * x[0];
            (*g)[1] = 2.0 * (x[1] + 1.0);
        }
        return v;
    };
    Eigen::VectorXd x0(2);
    x0 << 10.0, 10.0;
    auto res = minimize_bfgs(f, x0);
    for (std::size_t i = 1; i < res.f_history.size(); ++i)
        CHECK(res.f_history[i] <= res.f_history[i - 1]);
}

TEST_CASE("bfgs stops immediately at a stationary start") {
    auto f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
        if (g) *g = 2.0 * x;
        return x.squaredNorm();
    };
    auto res = minimize_bfgs(f, Eigen::VectorXd::Zero(3));
    CHECK(res.converged);
    CHECK(res.iterations == 0);
}
