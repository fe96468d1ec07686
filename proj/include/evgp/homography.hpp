#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "evgp/common.hpp"
#include "evgp/fields.hpp"

namespace evgp {

class PointAtInfinityError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// 3x3 projective transform, normalized so the bottom-right entry is 1.
struct Homography {
    Mat3 H = Mat3::Identity();

    static Homography identity() { return {}; }

    static Homography from_matrix(const Mat3& m) {
        if (std::abs(m(2, 2)) < 1e-12)
            throw std::invalid_argument("homography cannot be normalized: h33 ~ 0");
        Homography h;
        h.H = m / m(2, 2);
        if (std::abs(h.H.determinant()) <= 1e-12)
            throw std::invalid_argument("homography is singular");
        return h;
    }

    Homography inverse() const { return from_matrix(H.inverse()); }

    Vec2 project(const Vec2& e) const {
        Eigen::Vector3d v = H * Eigen::Vector3d(e.x(), e.y(), 1.0);
        if (std::abs(v.z()) < 1e-12)
            throw PointAtInfinityError("homography projects point to infinity");
        return {v.x() / v.z(), v.y() / v.z()};
    }

    /// Flat parameter vector of the 8 free entries (row-major, h33 pinned).
    Eigen::Matrix<double, 8, 1> params() const {
        Eigen::Matrix<double, 8, 1> p;
        p << H(0, 0), H(0, 1), H(0, 2), H(1, 0), H(1, 1), H(1, 2), H(2, 0), H(2, 1);
        return p;
    }

    static Homography from_params(const Eigen::Matrix<double, 8, 1>& p) {
        Homography h;
        h.H << p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 1.0;
        return h;
    }
};

inline Vec2 project(const Homography& h, const Vec2& e) { return h.project(e); }

/// One bidirectional registration term: moving points are scored against the
/// fixed field through pre*H, and fixed points against the moving field
/// through (pre*H)^-1. `pre` lets a shared H be optimized against references
/// expressed in different frames (e.g. a template anchored at the track
/// origin).
struct RegistrationConstraint {
    const DistanceField* fixed_field = nullptr;
    std::span<const Vec2> moving_points;
    const DistanceField* moving_field = nullptr;
    std::span<const Vec2> fixed_points;
    Mat3 pre = Mat3::Identity();
};

struct RegistrationOptions {
    double cauchy_scale = 1.0;
    int max_iterations = 100;
    double lambda_init = 1e-3;
    double lambda_max = 1e10;
    double step_tolerance = 1e-10;
    double cost_tolerance = 1e-14;
};

struct RegistrationResult {
    Homography h;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    bool converged = false;
    int iterations = 0;
};

namespace detail {

struct RobustAccum {
    double cost = 0.0;
    Eigen::Matrix<double, 8, 8> jtj = Eigen::Matrix<double, 8, 8>::Zero();
    Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
};

// rho(s) = c^2 log(1 + s/c^2), s = r^2
inline void add_residual(RobustAccum& acc, double r, const Eigen::Matrix<double, 8, 1>* jac,
                         double c2) {
    double s = r * r;
    acc.cost += c2 * std::log1p(s / c2);
    if (jac) {
        double w = 1.0 / (1.0 + s / c2);  // rho'(s)
        acc.jtj.noalias() += w * (*jac) * jac->transpose();
        acc.g.noalias() += w * r * (*jac);
    }
}

/// Accumulate cost (and optionally normal equations) of all constraints at H.
inline bool accumulate(std::span<const RegistrationConstraint> constraints, const Homography& h,
                       double c2, bool with_jacobian, RobustAccum& acc) {
    for (const auto& con : constraints) {
        const Mat3 B = con.pre * h.H;
        Mat3 C;
        if (con.moving_field && !con.fixed_points.empty()) {
            double det = B.determinant();
            if (std::abs(det) < 1e-12) return false;
            C = B.inverse();
        }

        if (con.fixed_field) {
            // columns of pre select d(u,v,w)/dh for parameter rows 0..2
            for (const Vec2& m : con.moving_points) {
                Eigen::Vector3d mh(m.x(), m.y(), 1.0);
                Eigen::Vector3d uvw = B * mh;
                if (std::abs(uvw.z()) < 1e-9) continue;  // degenerate point, skip
                Vec2 q(uvw.x() / uvw.z(), uvw.y() / uvw.z());
                if (!with_jacobian) {
                    add_residual(acc, con.fixed_field->distance(q), nullptr, c2);
                    continue;
                }
                auto [d, grad] = con.fixed_field->distance_and_gradient(q);
                Eigen::Matrix<double, 8, 1> jac;
                const double iw = 1.0 / uvw.z();
                for (int k = 0; k < 8; ++k) {
                    int row = k / 3, col = k % 3;
                    Eigen::Vector3d duvw = con.pre.col(row) * mh[col];
                    double dqx = (duvw.x() - q.x() * duvw.z()) * iw;
                    double dqy = (duvw.y() - q.y() * duvw.z()) * iw;
                    jac[k] = grad.x() * dqx + grad.y() * dqy;
                }
                add_residual(acc, d, &jac, c2);
            }
        }

        if (con.moving_field && !con.fixed_points.empty()) {
            Eigen::Matrix<double, 3, 3> cp;  // C * pre.col(r) stacked
            for (int r = 0; r < 3; ++r) cp.col(r) = C * con.pre.col(r);
            for (const Vec2& fpt : con.fixed_points) {
                Eigen::Vector3d fh(fpt.x(), fpt.y(), 1.0);
                Eigen::Vector3d y = C * fh;
                if (std::abs(y.z()) < 1e-9) continue;
                Vec2 q(y.x() / y.z(), y.y() / y.z());
                if (!with_jacobian) {
                    add_residual(acc, con.moving_field->distance(q), nullptr, c2);
                    continue;
                }
                auto [d, grad] = con.moving_field->distance_and_gradient(q);
                Eigen::Matrix<double, 8, 1> jac;
                const double iw = 1.0 / y.z();
                for (int k = 0; k < 8; ++k) {
                    int row = k / 3, col = k % 3;
                    Eigen::Vector3d dy = -cp.col(row) * y[col];  // d(C fh)/dh_k
                    double dqx = (dy.x() - q.x() * dy.z()) * iw;
                    double dqy = (dy.y() - q.y() * dy.z()) * iw;
                    jac[k] = grad.x() * dqx + grad.y() * dqy;
                }
                add_residual(acc, d, &jac, c2);
            }
        }
    }
    return true;
}

}  // namespace detail

/// Levenberg-Marquardt minimization of the bidirectional Cauchy-robust
/// distance-field cost over the 8 free homography parameters.
inline RegistrationResult register_homography(std::span<const RegistrationConstraint> constraints,
                                              const Homography& h_init,
                                              const RegistrationOptions& opt = {}) {
    const double c2 = opt.cauchy_scale * opt.cauchy_scale;
    RegistrationResult res;
    res.h = h_init;

    detail::RobustAccum acc;
    if (!detail::accumulate(constraints, res.h, c2, true, acc)) {
        res.converged = false;
        return res;
    }
    res.initial_cost = acc.cost;
    double cost = acc.cost;
    double lambda = opt.lambda_init;
    bool any_accept = false;

    int iter = 0;
    for (; iter < opt.max_iterations; ++iter) {
        res.iterations = iter + 1;
        Eigen::Matrix<double, 8, 8> damped = acc.jtj;
        damped.diagonal() += lambda * (acc.jtj.diagonal().array() + 1e-12).matrix();
        Eigen::Matrix<double, 8, 1> delta = damped.ldlt().solve(-acc.g);
        if (!delta.allFinite()) {
            lambda *= 10.0;
            if (lambda > opt.lambda_max) break;
            continue;
        }
        if (delta.lpNorm<Eigen::Infinity>() <
            opt.step_tolerance * (1.0 + res.h.params().lpNorm<Eigen::Infinity>())) {
            res.converged = true;
            break;
        }
        Homography h_try = Homography::from_params(res.h.params() + delta);
        detail::RobustAccum trial;
        bool ok = detail::accumulate(constraints, h_try, c2, false, trial);
        if (ok && trial.cost < cost) {
            double drop = cost - trial.cost;
            res.h = h_try;
            cost = trial.cost;
            any_accept = true;
            lambda = std::max(lambda * 0.1, 1e-12);
            acc = detail::RobustAccum{};
            if (!detail::accumulate(constraints, res.h, c2, true, acc)) break;
            if (drop < opt.cost_tolerance * std::max(1.0, cost)) {
                res.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > opt.lambda_max) {
                res.converged = any_accept;
                break;
            }
        }
    }
    if (iter == opt.max_iterations) res.converged = true;  // cap reached with progress
    res.final_cost = cost;
    if (!any_accept && !res.converged) res.h = h_init;
    return res;
}

/// Single-pair convenience wrapper: register `moving` onto the fixed field
/// with the inverse constraint from `fixed_points` onto the moving field.
inline RegistrationResult register_homography(std::span<const Vec2> moving,
                                              const DistanceField& fixed_field,
                                              const DistanceField& moving_field,
                                              std::span<const Vec2> fixed_points,
                                              const Homography& h_init,
                                              const RegistrationOptions& opt = {}) {
    RegistrationConstraint con;
    con.fixed_field = &fixed_field;
    con.moving_points = moving;
    con.moving_field = &moving_field;
    con.fixed_points = fixed_points;
    std::vector<RegistrationConstraint> cons{con};
    return register_homography(cons, h_init, opt);
}

}  // namespace evgp
