#pragma once

#include <cmath>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "evgp/common.hpp"
#include "evgp/event.hpp"
#include "evgp/gp.hpp"

namespace evgp {

/// Planar rigid transform: rotation by theta followed by translation p.
struct Se2Transform {
    double theta = 0.0;
    Vec2 p = Vec2::Zero();

    Vec2 apply(const Vec2& e) const {
        const double c = std::cos(theta), s = std::sin(theta);
        return {c * e.x() - s * e.y() + p.x(), s * e.x() + c * e.y() + p.y()};
    }

    Se2Transform inverse() const {
        const double c = std::cos(theta), s = std::sin(theta);
        // R(-theta) * -p
        return {-theta, Vec2(-(c * p.x() + s * p.y()), -(-s * p.x() + c * p.y()))};
    }

    Mat3 matrix() const {
        const double c = std::cos(theta), s = std::sin(theta);
        Mat3 m;
        m << c, -s, p.x(), s, c, p.y(), 0.0, 0.0, 1.0;
        return m;
    }
};

inline Vec2 apply_se2(const Se2Transform& t, const Vec2& e) { return t.apply(e); }

/// Continuous-time image-plane motion: three independent scalar GPs over time
/// (rotation angle and x/y translation), parameterized by inducing values at
/// fixed inducing times. The transform acts on coordinates centered on
/// `center`; with all inducing values zero the trajectory is the identity.
class Se2Trajectory {
  public:
    Se2Trajectory() = default;

    Se2Trajectory(std::vector<double> inducing_times, SqExpKernel kernel, double noise_var,
                  Vec2 center, double ref_time)
        : times_(std::move(inducing_times)),
          kernel_(kernel),
          noise_var_(noise_var),
          center_(center),
          ref_time_(ref_time) {
        const auto q = static_cast<Eigen::Index>(times_.size());
        if (q < 1) throw std::invalid_argument("trajectory needs at least one inducing time");
        for (std::size_t i = 1; i < times_.size(); ++i)
            if (times_[i] <= times_[i - 1])
                throw std::invalid_argument("inducing times must be strictly increasing");
        rot_ = Eigen::VectorXd::Zero(q);
        trans_x_ = Eigen::VectorXd::Zero(q);
        trans_y_ = Eigen::VectorXd::Zero(q);

        Eigen::MatrixXd T(q, 1);
        for (Eigen::Index i = 0; i < q; ++i) T(i, 0) = times_[static_cast<std::size_t>(i)];
        Eigen::MatrixXd A = sqexp_gram(kernel_, T);
        A.diagonal().array() += noise_var_;
        llt_.compute(A);
        if (llt_.info() != Eigen::Success) {
            A.diagonal().array() += GpModel::kJitter;
            llt_.compute(A);
            if (llt_.info() != Eigen::Success)
                throw SingularModelError("trajectory inducing-time Gram is not positive definite");
        }
    }

    /// Inducing times at every `events_per_state`-th event of the batch plus
    /// the final event's time; a batch not longer than `events_per_state`
    /// gets a single inducing point at its start. The kernel lengthscale is
    /// `lengthscale_factor` times the mean inducing-time spacing.
    static Se2Trajectory from_batch(const EventBatch& batch, std::size_t events_per_state,
                                    double lengthscale_factor, double noise_var) {
        if (batch.events.empty())
            throw std::invalid_argument("cannot build trajectory from empty batch");
        if (events_per_state < 1) throw std::invalid_argument("events_per_state must be >= 1");

        std::vector<double> times;
        const std::size_t n = batch.events.size();
        for (std::size_t i = 0; i < n; i += events_per_state) {
            double t = batch.events[i].t;
            if (times.empty() || t > times.back()) times.push_back(t);
        }
        if (n > events_per_state) {
            double t_last = batch.events[n - 1].t;
            if (t_last > times.back()) times.push_back(t_last);
        }

        double span = times.back() - times.front();
        double mean_spacing = times.size() > 1
                                  ? span / static_cast<double>(times.size() - 1)
                                  : std::max(batch.t_end() - batch.t_start, 1.0);
        SqExpKernel k{1.0, lengthscale_factor * std::max(mean_spacing, 1e-12)};
        return Se2Trajectory(std::move(times), k, noise_var, batch.seed, batch.t_start);
    }

    std::size_t num_states() const { return times_.size(); }
    const std::vector<double>& inducing_times() const { return times_; }
    const SqExpKernel& kernel() const { return kernel_; }
    double reference_time() const { return ref_time_; }
    const Vec2& center() const { return center_; }
    const Eigen::VectorXd& rot_values() const { return rot_; }

    /// Flat parameter vector [rot..., trans_x..., trans_y...].
    Eigen::VectorXd parameters() const {
        const auto q = static_cast<Eigen::Index>(times_.size());
        Eigen::VectorXd p(3 * q);
        p.segment(0, q) = rot_;
        p.segment(q, q) = trans_x_;
        p.segment(2 * q, q) = trans_y_;
        return p;
    }

    void set_parameters(const Eigen::Ref<const Eigen::VectorXd>& p) {
        const auto q = static_cast<Eigen::Index>(times_.size());
        if (p.size() != 3 * q) throw std::invalid_argument("parameter vector has wrong size");
        rot_ = p.segment(0, q);
        trans_x_ = p.segment(q, q);
        trans_y_ = p.segment(2 * q, q);
    }

    /// GP interpolation weights c(t) with theta(t) = c(t) . rot_values.
    Eigen::VectorXd interp_weights(double t) const {
        const auto q = static_cast<Eigen::Index>(times_.size());
        Eigen::VectorXd kq(q);
        for (Eigen::Index i = 0; i < q; ++i) {
            double d = t - times_[static_cast<std::size_t>(i)];
            kq[i] = kernel_.from_sq_dist(d * d);
        }
        return llt_.solve(kq);
    }

    /// Stacked interpolation weights for many query times (rows).
    Eigen::MatrixXd interp_weights(const std::vector<double>& ts) const {
        const auto q = static_cast<Eigen::Index>(times_.size());
        const auto n = static_cast<Eigen::Index>(ts.size());
        Eigen::MatrixXd K(q, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < q; ++i) {
                double d = ts[static_cast<std::size_t>(j)] - times_[static_cast<std::size_t>(i)];
                K(i, j) = kernel_.from_sq_dist(d * d);
            }
        return llt_.solve(K).transpose();  // n x q
    }

    Se2Transform pose_at(double t) const {
        Eigen::VectorXd w = interp_weights(t);
        return {w.dot(rot_), Vec2(w.dot(trans_x_), w.dot(trans_y_))};
    }

    /// Pose at t relative to the pose at the reference time. The likelihood
    /// only constrains relative motion (it sees pairwise distances), so the
    /// compensation map is anchored here: rel_pose_at(ref_time) is exactly
    /// the identity whatever gauge the optimizer settled in.
    Se2Transform rel_pose_at(double t) const {
        Se2Transform ref = pose_at(ref_time_);
        Se2Transform at = pose_at(t);
        const double c = std::cos(ref.theta), s = std::sin(ref.theta);
        Vec2 d = at.p - ref.p;
        return {at.theta - ref.theta, Vec2(c * d.x() + s * d.y(), -s * d.x() + c * d.y())};
    }

    /// Image coordinates at time t -> image coordinates at the reference time.
    Vec2 warp_to_ref(double t, const Vec2& pt) const {
        return rel_pose_at(t).apply(pt - center_) + center_;
    }

    /// Inverse map: reference-frame coordinates -> coordinates at time t.
    Vec2 warp_from_ref(double t, const Vec2& pt) const {
        return rel_pose_at(t).inverse().apply(pt - center_) + center_;
    }

    /// 3x3 matrix of warp_to_ref(t, .) acting on image coordinates.
    Mat3 warp_matrix(double t) const {
        Se2Transform pose = rel_pose_at(t);
        Mat3 m = pose.matrix();
        m.block<2, 1>(0, 2) = center_ + pose.p - m.block<2, 2>(0, 0) * center_;
        return m;
    }

    /// Solve (K_ss + noise I) x = v over the inducing-time Gram.
    Eigen::VectorXd apply_inverse_gram(const Eigen::Ref<const Eigen::VectorXd>& v) const {
        return llt_.solve(v);
    }

    void dump(std::ostream& os) const {
        for (std::size_t i = 0; i < times_.size(); ++i) {
            auto k = static_cast<Eigen::Index>(i);
            os << format_double(times_[i]) << ' ' << format_double(rot_[k]) << ' '
               << format_double(trans_x_[k]) << ' ' << format_double(trans_y_[k]) << '\n';
        }
    }

  private:
    std::vector<double> times_;
    SqExpKernel kernel_{1.0, 1.0};
    double noise_var_ = 1e-6;
    Vec2 center_ = Vec2::Zero();
    double ref_time_ = 0.0;
    Eigen::VectorXd rot_, trans_x_, trans_y_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

/// Motion-compensate every event of the batch to the trajectory's reference
/// time; output order matches input order.
inline std::vector<Vec2> compensate_batch(const Se2Trajectory& traj, const EventBatch& batch) {
    if (batch.events.empty()) throw std::invalid_argument("compensate_batch: empty batch");
    std::vector<Vec2> out;
    out.reserve(batch.events.size());
    for (const Event& e : batch.events) out.push_back(traj.warp_to_ref(e.t, {e.x, e.y}));
    return out;
}

}  // namespace evgp
