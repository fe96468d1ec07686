#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "evgp/bfgs.hpp"
#include "evgp/event.hpp"
#include "evgp/se2.hpp"

namespace evgp {

struct MotionCompConfig {
    std::size_t batch_size = 1250;
    std::size_t optimize_size = 1250;   // events used inside the likelihood
    std::size_t events_per_state = 250;
    double kf_scale = 1.0;              // occupancy kernel scaling factor
    double kf_lengthscale = 0.25;       // occupancy kernel lengthscale, px
    double occupancy_noise = 1e-2;      // observation noise of the unit targets
    double trajectory_noise = 1e-6;
    double trajectory_lengthscale_factor = 3.0;
    int max_iterations = 150;
    double gradient_tolerance = 1e-5;
    double lml_improvement_min = 0.02;  // nats per optimized event
    // Graduated optimization: BFGS is re-run while halving the kernel
    // lengthscale down to kf_lengthscale (stage k uses kf_lengthscale *
    // 2^k). The short target lengthscale only sees sub-pixel structure, so
    // starting it from the identity stalls on multi-pixel motions.
    int coarse_to_fine_stages = 4;

    double improvement_threshold(std::size_t n_opt) const {
        return lml_improvement_min * static_cast<double>(n_opt);
    }
};

struct MotionCompResult {
    Se2Trajectory trajectory;
    std::vector<Vec2> compensated;  // full batch, input order
    double lml_initial = 0.0;       // log marginal likelihood of the raw (identity) batch
    double lml_final = 0.0;
    bool converged = false;
    int iterations = 0;
    int n_evaluations = 0;
};

/// Constant-velocity extrapolation of a previous batch, used to warm-start
/// the next optimization: slopes of the compensation angle/translation.
struct WarmStart {
    double dtheta_dt = 0.0;
    Vec2 dp_dt = Vec2::Zero();
};

/// Gram matrix of the trajectory-embedded kernel over a batch: entry (i,j) is
/// kf_scale * exp(-|w_i - w_j|^2 / (2 l^2)) with w the motion-compensated
/// event coordinates.
inline Eigen::MatrixXd kf_gram(const Se2Trajectory& traj, const EventBatch& batch,
                               const MotionCompConfig& cfg) {
    const auto n = static_cast<Eigen::Index>(batch.events.size());
    Eigen::MatrixXd W(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Event& e = batch.events[static_cast<std::size_t>(i)];
        W.row(i) = traj.warp_to_ref(e.t, {e.x, e.y}).transpose();
    }
    SqExpKernel k{cfg.kf_scale, cfg.kf_lengthscale};
    return sqexp_gram(k, W);
}

/// Negative log marginal likelihood of unit targets under the
/// trajectory-embedded occupancy kernel, with analytic gradients w.r.t. the
/// flat inducing-value vector [rot..., trans_x..., trans_y...].
class MotionObjective {
  public:
    MotionObjective(const Se2Trajectory& traj, const EventBatch& batch,
                    const MotionCompConfig& cfg)
        : traj_(traj),
          q_(static_cast<Eigen::Index>(traj.num_states())),
          n_(static_cast<Eigen::Index>(batch.events.size())),
          sigma_f_(cfg.kf_scale),
          inv_l2_(1.0 / (cfg.kf_lengthscale * cfg.kf_lengthscale)),
          noise_(cfg.occupancy_noise) {
        std::vector<double> ts(batch.events.size());
        centered_.resize(n_, 2);
        for (Eigen::Index i = 0; i < n_; ++i) {
            const Event& e = batch.events[static_cast<std::size_t>(i)];
            ts[static_cast<std::size_t>(i)] = e.t;
            centered_(i, 0) = e.x - traj.center().x();
            centered_(i, 1) = e.y - traj.center().y();
        }
        weights_ = traj.interp_weights(ts);  // n x q
    }

    Eigen::Index n_events() const { return n_; }
    Eigen::Index n_params() const { return 3 * q_; }

    /// f = -lml; fills *grad when non-null. Returns a large finite penalty
    /// with zero gradient if the covariance factorization fails.
    double operator()(const Eigen::VectorXd& params, Eigen::VectorXd* grad) const {
        const Eigen::VectorXd theta = weights_ * params.segment(0, q_);
        const Eigen::VectorXd px = weights_ * params.segment(q_, q_);
        const Eigen::VectorXd py = weights_ * params.segment(2 * q_, q_);

        Eigen::ArrayXd c = theta.array().cos();
        Eigen::ArrayXd s = theta.array().sin();
        Eigen::ArrayXd ex = centered_.col(0).array();
        Eigen::ArrayXd ey = centered_.col(1).array();

        Eigen::MatrixXd pts(n_, 2);
        pts.col(0) = (c * ex - s * ey + px.array()).matrix();
        pts.col(1) = (s * ex + c * ey + py.array()).matrix();

        SqExpKernel kf{sigma_f_, 1.0 / std::sqrt(inv_l2_)};
        Eigen::MatrixXd K = sqexp_gram(kf, pts);

        Eigen::MatrixXd A = K;
        A.diagonal().array() += noise_;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() != Eigen::Success) {
            if (grad) grad->setZero(3 * q_);
            return kPenalty;
        }
        Eigen::VectorXd alpha = llt.solve(Eigen::VectorXd::Ones(n_));
        double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
        double lml = -0.5 * alpha.sum() - 0.5 * logdet -
                     0.5 * static_cast<double>(n_) * std::log(2.0 * std::numbers::pi);

        if (grad) {
            // d lml / d param = 0.5 tr((alpha alpha^T - A^-1) dK/dparam); the
            // pairwise structure of dK contracts to per-event pull vectors.
            Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n_, n_);
            llt.solveInPlace(M);
            M.noalias() -= alpha * alpha.transpose();  // -(alpha alpha^T - A^-1)
            Eigen::MatrixXd G = 0.5 * inv_l2_ * M.cwiseProduct(K);  // includes both sign flips
            Eigen::VectorXd rowsum = G.rowwise().sum();
            Eigen::MatrixXd S = rowsum.asDiagonal() * pts - G * pts;  // n x 2 pull vectors

            Eigen::ArrayXd vx = -s * ex - c * ey;  // d(pts)/d(theta_i)
            Eigen::ArrayXd vy = c * ex - s * ey;
            Eigen::VectorXd u =
                (vx * S.col(0).array() + vy * S.col(1).array()).matrix();

            // d lml / d rot_q = 2 sum_i W_iq (dw_i . s_i); negated for f = -lml
            grad->resize(3 * q_);
            grad->segment(0, q_) = -2.0 * (weights_.transpose() * u);
            grad->segment(q_, q_) = -2.0 * (weights_.transpose() * S.col(0));
            grad->segment(2 * q_, q_) = -2.0 * (weights_.transpose() * S.col(1));
        }

        // Zero-mean GP prior of the trajectory: the likelihood only sees
        // relative motion, so this both anchors the flat gauge directions
        // near the identity and penalizes rough inducing-value patterns the
        // data cannot support.
        double prior = 0.0;
        for (int b = 0; b < 3; ++b) {
            Eigen::VectorXd v = params.segment(b * q_, q_);
            Eigen::VectorXd Kinv_v = traj_.apply_inverse_gram(v);
            prior += 0.5 * v.dot(Kinv_v);
            if (grad) grad->segment(b * q_, q_) += Kinv_v;
        }
        return -lml + prior;
    }

    static constexpr double kPenalty = 1e12;

  private:
    Se2Trajectory traj_;
    Eigen::Index q_, n_;
    double sigma_f_, inv_l2_, noise_;
    Eigen::MatrixXd centered_;  // n x 2, seed-centered event coordinates
    Eigen::MatrixXd weights_;   // n x q GP interpolation weights
};

/// Estimate the SE(2) trajectory of a batch by maximizing the marginal
/// likelihood over the inducing values, then compensate the full batch.
inline MotionCompResult compensate(const EventBatch& batch, const MotionCompConfig& cfg,
                                   const std::optional<WarmStart>& warm = std::nullopt) {
    if (batch.events.size() < 2)
        throw std::invalid_argument("compensate: batch needs at least 2 events");

    MotionCompResult res;
    res.trajectory = Se2Trajectory::from_batch(batch, cfg.events_per_state,
                                               cfg.trajectory_lengthscale_factor,
                                               cfg.trajectory_noise);

    const std::size_t n_opt = std::min(cfg.optimize_size, batch.events.size());
    EventBatch opt_batch = (n_opt < batch.events.size()) ? downsample_batch(batch, n_opt) : batch;

    MotionObjective target(res.trajectory, opt_batch, cfg);

    const auto q = static_cast<Eigen::Index>(res.trajectory.num_states());
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(3 * q);
    const double f_zero = target(x0, nullptr);
    res.lml_initial = -f_zero;  // prior term vanishes at the identity
    res.n_evaluations = 1;

    bool polish_only = false;  // a good warm start skips the coarse stages
    if (warm) {
        Eigen::VectorXd xw(3 * q);
        const auto& times = res.trajectory.inducing_times();
        for (Eigen::Index i = 0; i < q; ++i) {
            double dt = times[static_cast<std::size_t>(i)] - batch.t_start;
            xw[i] = warm->dtheta_dt * dt;
            xw[q + i] = warm->dp_dt.x() * dt;
            xw[2 * q + i] = warm->dp_dt.y() * dt;
        }
        ++res.n_evaluations;
        if (target(xw, nullptr) < f_zero) {
            x0 = std::move(xw);
            polish_only = true;
        }
    }

    BfgsOptions bopt;
    bopt.max_iterations = cfg.max_iterations;
    bopt.gradient_tolerance = cfg.gradient_tolerance;

    Eigen::VectorXd x = std::move(x0);
    double f_final = f_zero;
    bool last_converged = false;
    EventBatch stage_scratch;
    const int stages = polish_only ? 1 : std::max(1, cfg.coarse_to_fine_stages);
    for (int k = stages - 1; k >= 0; --k) {
        MotionCompConfig stage_cfg = cfg;
        stage_cfg.kf_lengthscale = cfg.kf_lengthscale * static_cast<double>(1 << k);
        // coarse stages only resolve coarse structure; a subsample is enough
        std::size_t stage_n = k == 0 ? n_opt
                                     : std::max<std::size_t>(std::min<std::size_t>(300, n_opt),
                                                             n_opt >> k);
        const EventBatch& stage_batch =
            stage_n < opt_batch.events.size()
                ? static_cast<const EventBatch&>(stage_scratch = downsample_batch(opt_batch, stage_n))
                : opt_batch;
        MotionObjective stage_obj(res.trajectory, stage_batch, stage_cfg);
        BfgsOptions stage_opt = bopt;
        if (k > 0) stage_opt.max_iterations = std::min(60, bopt.max_iterations);
        BfgsResult bres = minimize_bfgs(
            [&stage_obj](const Eigen::VectorXd& v, Eigen::VectorXd* g) {
                return stage_obj(v, g);
            },
            std::move(x), stage_opt);
        x = std::move(bres.x);
        res.iterations += bres.iterations;
        res.n_evaluations += bres.n_evaluations;
        if (k == 0) {
            f_final = bres.f;
            last_converged = bres.converged;
        }
    }

    if (f_final > f_zero) {  // never return a point worse than the identity
        x.setZero();
        f_final = f_zero;
        last_converged = false;
    }
    res.trajectory.set_parameters(x);
    res.lml_final = -f_final;
    res.converged = last_converged &&
                    (res.lml_final - res.lml_initial >= cfg.improvement_threshold(n_opt));
    res.compensated = compensate_batch(res.trajectory, batch);
    return res;
}

/// End-of-batch slopes of an optimized trajectory, for warm-starting the next
/// batch under a constant-velocity assumption.
inline WarmStart extrapolate_warm_start(const Se2Trajectory& traj) {
    const auto& times = traj.inducing_times();
    double t1 = times.back();
    double h = times.size() > 1 ? (times.back() - times.front()) /
                                      static_cast<double>(times.size() - 1)
                                : 1.0;
    if (h <= 0.0) return {};
    Se2Transform a = traj.pose_at(t1 - h);
    Se2Transform b = traj.pose_at(t1);
    WarmStart w;
    w.dtheta_dt = (b.theta - a.theta) / h;
    w.dp_dt = (b.p - a.p) / h;
    return w;
}

}  // namespace evgp
