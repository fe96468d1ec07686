#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace evgp {

/// Objective callback: returns f(x); fills *grad when non-null.
using BfgsObjective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct BfgsOptions {
    int max_iterations = 150;
    double gradient_tolerance = 1e-5;  // on |g|_inf / max(1, |f|)
    double f_tolerance = 1e-7;         // relative decrease considered a stall
    int max_linesearch = 25;
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
};

struct BfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd grad;
    int iterations = 0;
    int n_evaluations = 0;
    bool converged = false;  // stopped by tolerance or iteration cap (not a line-search abort)
    std::vector<double> f_history;  // accepted objective values, non-increasing
};

namespace detail {

struct LineSearchEval {
    const BfgsObjective& f;
    const Eigen::VectorXd& x0;
    const Eigen::VectorXd& dir;
    int& n_evals;
    Eigen::VectorXd x_buf;
    Eigen::VectorXd g_buf;

    double value(double a) {
        x_buf = x0 + a * dir;
        ++n_evals;
        return f(x_buf, nullptr);
    }
    // value and directional derivative along dir
    double value_slope(double a, double& slope) {
        x_buf = x0 + a * dir;
        ++n_evals;
        double v = f(x_buf, &g_buf);
        slope = g_buf.dot(dir);
        return v;
    }
};

}  // namespace detail

/// Minimize f with full-memory BFGS and a strong-Wolfe line search
/// (bracket + zoom). Accepted iterates are strictly non-increasing in f.
inline BfgsResult minimize_bfgs(const BfgsObjective& f, Eigen::VectorXd x0,
                                const BfgsOptions& opt = {}) {
    const auto n = x0.size();
    BfgsResult res;
    res.x = std::move(x0);
    res.grad.resize(n);
    res.f = f(res.x, &res.grad);
    res.n_evaluations = 1;
    res.f_history.push_back(res.f);

    Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
    bool first_step = true;
    int stalls = 0;

    auto grad_small = [&](double fv, const Eigen::VectorXd& g) {
        return g.lpNorm<Eigen::Infinity>() <= opt.gradient_tolerance * std::max(1.0, std::abs(fv));
    };

    if (grad_small(res.f, res.grad)) {
        res.converged = true;
        return res;
    }

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        Eigen::VectorXd dir = -(H * res.grad);
        double slope0 = res.grad.dot(dir);
        if (slope0 >= 0.0) {  // H lost positive definiteness; reset to steepest descent
            H.setIdentity();
            dir = -res.grad;
            slope0 = res.grad.dot(dir);
        }

        // Strong Wolfe line search (Nocedal & Wright alg. 3.5/3.6).
        detail::LineSearchEval ev{f, res.x, dir, res.n_evaluations, {}, {}};
        const double f0 = res.f;
        double a_prev = 0.0, f_prev = f0;
        double a = 1.0;
        double a_lo = 0.0, a_hi = 0.0, f_lo = f0;
        bool bracketed = false, found = false;
        double a_star = 0.0, f_star = f0, slope_star = 0.0;
        bool have_g_star = false;

        for (int ls = 0; ls < opt.max_linesearch; ++ls) {
            // value and slope in one evaluation; the slope is needed whenever
            // the sufficient-decrease test passes, which is the common case
            double slope_a;
            double fa = ev.value_slope(a, slope_a);
            if (fa > f0 + opt.wolfe_c1 * a * slope0 || (ls > 0 && fa >= f_prev)) {
                a_lo = a_prev;
                f_lo = f_prev;
                a_hi = a;
                bracketed = true;
                break;
            }
            if (std::abs(slope_a) <= -opt.wolfe_c2 * slope0) {
                a_star = a;
                f_star = fa;
                slope_star = slope_a;
                found = true;
                have_g_star = true;
                break;
            }
            if (slope_a >= 0.0) {
                a_lo = a;
                f_lo = fa;
                a_hi = a_prev;
                bracketed = true;
                break;
            }
            a_prev = a;
            f_prev = fa;
            a *= 2.0;
        }

        if (!found && bracketed) {
            for (int z = 0; z < opt.max_linesearch; ++z) {
                double aj = 0.5 * (a_lo + a_hi);
                double fj = ev.value(aj);
                if (fj > f0 + opt.wolfe_c1 * aj * slope0 || fj >= f_lo) {
                    a_hi = aj;
                } else {
                    double slope_j;
                    fj = ev.value_slope(aj, slope_j);
                    if (std::abs(slope_j) <= -opt.wolfe_c2 * slope0) {
                        a_star = aj;
                        f_star = fj;
                        slope_star = slope_j;
                        found = true;
                        have_g_star = true;
                        break;
                    }
                    if (slope_j * (a_hi - a_lo) >= 0.0) a_hi = a_lo;
                    a_lo = aj;
                    f_lo = fj;
                }
                if (std::abs(a_hi - a_lo) < 1e-16 * std::max(1.0, std::abs(a_lo))) break;
            }
            // Fall back to the best sufficient-decrease point found by bisection.
            if (!found && a_lo > 0.0 && f_lo < f0) {
                a_star = a_lo;
                f_star = f_lo;
                found = true;
                have_g_star = false;
            }
        }

        if (!found) {
            res.iterations = iter;
            res.converged = grad_small(res.f, res.grad);
            return res;  // no acceptable step; keep the last (best) iterate
        }

        Eigen::VectorXd step = a_star * dir;
        Eigen::VectorXd g_new(n);
        if (have_g_star && (ev.x_buf - (res.x + step)).lpNorm<Eigen::Infinity>() == 0.0) {
            g_new = ev.g_buf;
        } else {
            ++res.n_evaluations;
            f_star = f(res.x + step, &g_new);
            slope_star = g_new.dot(dir);
        }
        (void)slope_star;

        Eigen::VectorXd y = g_new - res.grad;
        double sy = step.dot(y);
        res.x += step;
        double f_old = res.f;
        res.f = f_star;
        res.grad = g_new;
        res.f_history.push_back(res.f);
        res.iterations = iter + 1;

        if (grad_small(res.f, res.grad)) {
            res.converged = true;
            return res;
        }
        if (f_old - res.f < opt.f_tolerance * std::max(1.0, std::abs(res.f))) {
            if (++stalls >= 2) {
                res.converged = true;
                return res;
            }
        } else {
            stalls = 0;
        }

        if (sy > 1e-12 * step.norm() * y.norm()) {
            if (first_step) {
                H = (sy / y.squaredNorm()) * Eigen::MatrixXd::Identity(n, n);
                first_step = false;
            }
            Eigen::VectorXd Hy = H * y;
            double yHy = y.dot(Hy);
            double rho = 1.0 / sy;
            // BFGS inverse update: H += (1 + yHy rho) rho s s^T - rho (s Hy^T + Hy s^T)
            H.noalias() += (1.0 + rho * yHy) * rho * step * step.transpose();
            H.noalias() -= rho * (step * Hy.transpose() + Hy * step.transpose());
        }
    }

    res.converged = true;  // iteration cap reached with monotone progress
    return res;
}

}  // namespace evgp
