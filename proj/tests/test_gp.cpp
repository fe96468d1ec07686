#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "evgp/gp.hpp"

using namespace evgp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Eigen::VectorXd vec1(double v) {
    Eigen::VectorXd x(1);
    x[0] = v;
    return x;
}

// independent finite-difference oracle for the likelihood gradient
Eigen::Vector2d fd_kernel_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                   SqExpKernel k, double noise, double h = 1e-6) {
    auto lml = [&](SqExpKernel kk) {
        return GpModel::fit(X, y, kk, noise).log_marginal_likelihood();
    };
    SqExpKernel kp = k, km = k;
    kp.scale += h;
    km.scale -= h;
    double dscale = (lml(kp) - lml(km)) / (2 * h);
    kp = km = k;
    kp.lengthscale += h;
    km.lengthscale -= h;
    double dlength = (lml(kp) - lml(km)) / (2 * h);
    return {dscale, dlength};
}

}  // namespace

TEST_CASE("sqexp kernel closed forms") {
    SqExpKernel k{1.0, 0.25};
    CHECK_THAT(k(vec1(3.0), vec1(3.0)), WithinAbs(1.0, 1e-15));

    SqExpKernel k2{1.0, 0.7};
    // distance equal to the lengthscale
    CHECK_THAT(k2(vec1(0.0), vec1(0.7)), WithinRel(std::exp(-0.5), 1e-12));
    CHECK(k2(vec1(0.0), vec1(100.0)) < 1e-15);
    CHECK(k2(vec1(0.2), vec1(0.9)) == k2(vec1(0.9), vec1(0.2)));
}

TEST_CASE("gram matrix is exactly symmetric") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X(15, 2);
    for (int i = 0; i < X.size(); ++i) X(i / 2, i % 2) = g(rng);
    Eigen::MatrixXd K = sqexp_gram(SqExpKernel{1.3, 0.8}, X);
    CHECK((K - K.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("1x1 model: weights, mean, variance, likelihood") {
    auto m = GpModel::fit(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1),
                          SqExpKernel{1.0, 1.0}, 0.0);
    CHECK_THAT(m.weights()[0], WithinAbs(1.0, 1e-15));
    CHECK_THAT(m.mean(vec1(0.0)), WithinAbs(1.0, 1e-15));
    CHECK_THAT(m.mean(vec1(1.0)), WithinRel(std::exp(-0.5), 1e-12));
    CHECK(m.mean(vec1(100.0)) < 1e-10);
    CHECK_THAT(m.variance(vec1(0.0)), WithinAbs(0.0, 1e-12));
    CHECK_THAT(m.variance(vec1(1.0)), WithinRel(1.0 - std::exp(-1.0), 1e-10));
    CHECK_THAT(m.variance(vec1(50.0)), WithinRel(1.0, 1e-10));

    // -1/2 - 1/2 log(2 pi)
    CHECK_THAT(m.log_marginal_likelihood(),
               WithinAbs(-0.5 - 0.5 * std::log(2.0 * std::numbers::pi), 1e-12));
}

TEST_CASE("noise shifts the 1x1 likelihood per the closed form") {
    for (double noise : {0.1, 1.0, 3.0}) {
        auto m = GpModel::fit(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1),
                              SqExpKernel{1.0, 1.0}, noise);
        double expected = -0.5 / (1.0 + noise) - 0.5 * std::log(1.0 + noise) -
                          0.5 * std::log(2.0 * std::numbers::pi);
        CHECK_THAT(m.log_marginal_likelihood(), WithinRel(expected, 1e-12));
    }
}

TEST_CASE("duplicate inputs: singular without noise, fine with noise") {
    Eigen::MatrixXd X(2, 1);
    X << 0.3, 0.3;
    Eigen::VectorXd y(2);
    y << 1.0, 1.0;
    CHECK_THROWS_AS(GpModel::fit(X, y, SqExpKernel{1.0, 1.0}, 0.0), SingularModelError);
    CHECK_NOTHROW(GpModel::fit(X, y, SqExpKernel{1.0, 1.0}, 1e-4));
}

TEST_CASE("zero targets leave only the determinant terms") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X(6, 1);
    for (int i = 0; i < 6; ++i) X(i, 0) = 2.0 * i;
    auto m0 = GpModel::fit(X, Eigen::VectorXd::Zero(6), SqExpKernel{1.0, 0.9}, 0.1);
    auto m1 = GpModel::fit(X, Eigen::VectorXd::Random(6), SqExpKernel{1.0, 0.9}, 0.1);
    (void)rng;
    (void)g;
    // data-fit term vanishes for y = 0, so lml(y=0) >= lml(any y)
    CHECK(m0.log_marginal_likelihood() >= m1.log_marginal_likelihood());
    Eigen::MatrixXd K = sqexp_gram(m0.kernel(), X);
    K.diagonal().array() += 0.1;
    double expected = -0.5 * std::log(K.determinant()) - 3.0 * std::log(2.0 * std::numbers::pi);
    CHECK_THAT(m0.log_marginal_likelihood(), WithinRel(expected, 1e-9));
}

TEST_CASE("mean interpolates targets and variance vanishes at the data") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X(10, 1);
    for (int i = 0; i < 10; ++i) X(i, 0) = 1.1 * i;  // well separated
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) y[i] = g(rng);
    auto m = GpModel::fit(X, y, SqExpKernel{1.0, 0.7}, 0.0);
    for (int i = 0; i < 10; ++i) {
        CHECK_THAT(m.mean(vec1(X(i, 0))), WithinRel(y[i], 1e-8));
        CHECK(m.variance(vec1(X(i, 0))) <= 1e-8);
    }
}

TEST_CASE("lml is invariant under permutation of the data") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> g;
    Eigen::MatrixXd X(8, 2);
    Eigen::VectorXd y(8);
    for (int i = 0; i < 8; ++i) {
        X(i, 0) = g(rng);
        X(i, 1) = g(rng);
        y[i] = g(rng);
    }
    auto m = GpModel::fit(X, y, SqExpKernel{1.2, 0.6}, 0.05);

    std::vector<int> perm{3, 1, 7, 0, 5, 2, 6, 4};
    Eigen::MatrixXd Xp(8, 2);
    Eigen::VectorXd yp(8);
    for (int i = 0; i < 8; ++i) {
        Xp.row(i) = X.row(perm[i]);
        yp[i] = y[perm[i]];
    }
    auto mp = GpModel::fit(Xp, yp, SqExpKernel{1.2, 0.6}, 0.05);
    CHECK_THAT(mp.log_marginal_likelihood(), WithinRel(m.log_marginal_likelihood(), 1e-12));
}

TEST_CASE("lml gradient: zero derivative matrix gives zero component") {
    auto m = GpModel::fit(Eigen::MatrixXd::Random(5, 1), Eigen::VectorXd::Random(5),
                          SqExpKernel{1.0, 1.5}, 0.01);
    auto g = m.lml_gradient(1, [](std::size_t, Eigen::MatrixXd& dK) { dK.setZero(5, 5); });
    CHECK(g[0] == 0.0);
}

TEST_CASE("lml gradient: 1x1 closed form in the scale") {
    // K = [sigma], y = [1]: d lml / d sigma = 1/(2 sigma^2) - 1/(2 sigma)
    for (double sigma : {0.5, 1.0, 2.0}) {
        auto m = GpModel::fit(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1),
                              SqExpKernel{sigma, 1.0}, 0.0);
        auto g = m.lml_gradient(1, [](std::size_t, Eigen::MatrixXd& dK) {
            dK.setOnes(1, 1);
        });
        CHECK_THAT(g[0], WithinAbs(0.5 / (sigma * sigma) - 0.5 / sigma, 1e-12));
    }
    // at sigma = 1 the gradient vanishes
    auto m = GpModel::fit(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Ones(1),
                          SqExpKernel{1.0, 1.0}, 0.0);
    auto g = m.lml_gradient(1, [](std::size_t, Eigen::MatrixXd& dK) { dK.setOnes(1, 1); });
    CHECK_THAT(g[0], WithinAbs(0.0, 1e-12));
}

TEST_CASE("lml gradient matches central finite differences on random models") {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 10; ++trial) {
        Eigen::MatrixXd X(20, 2);
        Eigen::VectorXd y(20);
        for (int i = 0; i < 20; ++i) {
            X(i, 0) = 3.0 * g(rng);
            X(i, 1) = 3.0 * g(rng);
            y[i] = g(rng);
        }
        SqExpKernel k{0.8 + 0.4 * std::abs(g(rng)), 0.9 + 0.3 * std::abs(g(rng))};
        double noise = 0.05;
        auto m = GpModel::fit(X, y, k, noise);
        Eigen::Vector2d analytic = m.lml_kernel_gradient();
        Eigen::Vector2d fd = fd_kernel_gradient(X, y, k, noise);
        for (int p = 0; p < 2; ++p) {
            double denom = std::max(std::abs(fd[p]), 1e-8);
            CHECK(std::abs(analytic[p] - fd[p]) / denom < 1e-4);
        }
    }
}
