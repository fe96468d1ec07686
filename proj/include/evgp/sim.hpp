#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "evgp/common.hpp"
#include "evgp/event.hpp"
#include "evgp/gp.hpp"
#include "evgp/motion_comp.hpp"
#include "evgp/se2.hpp"

namespace evgp {

enum class SceneKind { tags, rocks };
enum class MotionKind { translation, se2 };

inline const char* to_string(SceneKind k) { return k == SceneKind::tags ? "tags" : "rocks"; }
inline const char* to_string(MotionKind k) {
    return k == MotionKind::translation ? "translation" : "se2";
}

/// Planar pattern as a set of landmark points in the pattern frame (centered
/// on the seed at the trajectory start).
struct Scene {
    std::vector<Vec2> landmarks;

    /// Lattice of axis-aligned square outlines, points every 0.5 px along the
    /// edges; centres and sizes are jittered per instance.
    static Scene tag_lattice(double extent, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> jitter(-0.6, 0.6);
        Scene s;
        const double c = 0.52 * extent;
        const double side = 0.62 * extent;
        for (double sx : {-1.0, 1.0})
            for (double sy : {-1.0, 1.0}) {
                Vec2 centre(sx * c + jitter(rng), sy * c + jitter(rng));
                double half = 0.5 * (side + jitter(rng));
                const double step = 0.5;
                for (double a = -half; a < half; a += step) {
                    s.landmarks.push_back(centre + Vec2(a, -half));
                    s.landmarks.push_back(centre + Vec2(half, a));
                    s.landmarks.push_back(centre + Vec2(-a, half));
                    s.landmarks.push_back(centre + Vec2(-half, -a));
                }
            }
        return s;
    }

    /// Random blob boundaries: perturbed circles sampled at ~0.5 px arc steps.
    static Scene rock_blobs(double extent, int n_blobs, std::mt19937_64& rng) {
        std::uniform_real_distribution<double> pos(-0.8 * extent, 0.8 * extent);
        std::uniform_real_distribution<double> rad(1.5, 3.5);
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        Scene s;
        for (int b = 0; b < n_blobs; ++b) {
            Vec2 centre(pos(rng), pos(rng));
            double r0 = rad(rng);
            double p3 = phase(rng), p5 = phase(rng);
            int steps = std::max(12, static_cast<int>(2.0 * std::numbers::pi * r0 / 0.5));
            for (int i = 0; i < steps; ++i) {
                double a = 2.0 * std::numbers::pi * i / steps;
                double r = r0 * (1.0 + 0.25 * std::sin(3.0 * a + p3) + 0.15 * std::sin(5.0 * a + p5));
                Vec2 p = centre + r * Vec2(std::cos(a), std::sin(a));
                if (std::abs(p.x()) <= extent && std::abs(p.y()) <= extent) s.landmarks.push_back(p);
            }
        }
        if (s.landmarks.empty()) s.landmarks.push_back(Vec2::Zero());
        return s;
    }
};

/// Ground-truth pattern motion over a time span, identity at relative time 0.
/// Smooth SE(2) trajectories are GP samples interpolated exactly by a GP
/// posterior mean, so the pose is evaluable at arbitrary times.
class GroundTruthTrajectory {
  public:
    static GroundTruthTrajectory constant_velocity(const Vec2& v) {
        GroundTruthTrajectory t;
        t.velocity_ = v;
        t.smooth_ = false;
        return t;
    }

    static GroundTruthTrajectory smooth_se2(double duration, double batch_duration,
                                            double peak_theta, double peak_trans,
                                            std::mt19937_64& rng) {
        GroundTruthTrajectory t;
        t.smooth_ = true;
        const double lengthscale = 0.5 * batch_duration;
        const double spacing = 0.5 * lengthscale;
        const int q = std::max(4, static_cast<int>(std::ceil(duration / spacing)) + 1);
        Eigen::MatrixXd T(q, 1);
        for (int i = 0; i < q; ++i) T(i, 0) = duration * i / (q - 1);

        SqExpKernel kernel{1.0, lengthscale};
        Eigen::MatrixXd K = sqexp_gram(kernel, T);
        K.diagonal().array() += 1e-8;  // dense SqExp Grams are near-singular
        Eigen::LLT<Eigen::MatrixXd> llt(K);
        std::normal_distribution<double> gauss(0.0, 1.0);
        auto draw = [&]() {
            Eigen::VectorXd z(q);
            for (int i = 0; i < q; ++i) z[i] = gauss(rng);
            Eigen::VectorXd f = llt.matrixL() * z;
            f.array() -= f[0];  // identity at relative time 0
            return f;
        };
        Eigen::VectorXd ftheta = draw(), fx = draw(), fy = draw();

        std::uniform_real_distribution<double> amp(0.4, 1.0);
        const double utheta = amp(rng), utrans = amp(rng);

        GroundTruthTrajectory raw;
        raw.smooth_ = true;
        raw.fit_knots(T, ftheta, fx, fy, kernel);

        // scale so the peak in-batch variation matches the requested bounds
        const int m = 512;
        double max_dtheta = 0.0, max_dp = 0.0;
        std::vector<double> th(m), px(m), py(m);
        for (int i = 0; i < m; ++i) {
            double tau = duration * i / (m - 1);
            Se2Transform p = raw.pose(tau);
            th[i] = p.theta;
            px[i] = p.p.x();
            py[i] = p.p.y();
        }
        const int w = std::max(1, static_cast<int>(std::floor(batch_duration / duration * (m - 1))));
        for (int i = 0; i + w < m; ++i) {
            for (int j = i; j <= i + w; ++j) {
                max_dtheta = std::max(max_dtheta, std::abs(th[j] - th[i]));
                max_dp = std::max(max_dp, std::hypot(px[j] - px[i], py[j] - py[i]));
            }
        }
        double stheta = max_dtheta > 1e-12 ? peak_theta * utheta / max_dtheta : 0.0;
        double strans = max_dp > 1e-12 ? peak_trans * utrans / max_dp : 0.0;
        t.fit_knots(T, (ftheta * stheta).eval(), (fx * strans).eval(), (fy * strans).eval(),
                    kernel);
        return t;
    }

    /// Pattern pose at relative time tau: landmark -> R(theta) lm + p.
    Se2Transform pose(double tau) const {
        if (!smooth_) return {0.0, velocity_ * tau};
        Eigen::VectorXd q(1);
        q[0] = tau;
        return {theta_->mean(q), Vec2(px_->mean(q), py_->mean(q))};
    }

  private:
    void fit_knots(const Eigen::MatrixXd& T, const Eigen::VectorXd& th, const Eigen::VectorXd& px,
                   const Eigen::VectorXd& py, SqExpKernel kernel) {
        theta_ = GpModel::fit(T, th, kernel, 1e-8);
        px_ = GpModel::fit(T, px, kernel, 1e-8);
        py_ = GpModel::fit(T, py, kernel, 1e-8);
    }

    bool smooth_ = false;
    Vec2 velocity_ = Vec2::Zero();
    std::optional<GpModel> theta_, px_, py_;
};

/// One simulated batch with its ground truth.
struct SimBatch {
    EventBatch batch;
    std::vector<int> landmark_of;  // per event, index into scene.landmarks
    Scene scene;
    GroundTruthTrajectory trajectory;
    Vec2 seed = Vec2::Zero();
    double t0 = 0.0;
};

/// Draw `count` events: times uniform over [t0, t0+duration], landmarks
/// uniform, positions given by the ground-truth pose plus isotropic Gaussian
/// pixel noise.
inline SimBatch generate_events(Scene scene, const GroundTruthTrajectory& traj, const Vec2& seed,
                                double t0, double duration, std::size_t count, double noise_sigma,
                                std::mt19937_64& rng) {
    if (count < 1) throw std::invalid_argument("generate_events: count must be >= 1");
    SimBatch sim;
    sim.scene = std::move(scene);
    sim.trajectory = traj;
    sim.seed = seed;
    sim.t0 = t0;

    std::uniform_real_distribution<double> utime(0.0, duration);
    std::uniform_int_distribution<std::size_t> ulm(0, sim.scene.landmarks.size() - 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_int_distribution<int> upol(0, 1);

    std::vector<double> taus(count);
    for (auto& t : taus) t = utime(rng);
    std::sort(taus.begin(), taus.end());

    sim.batch.events.reserve(count);
    sim.landmark_of.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto lm_idx = ulm(rng);
        Se2Transform pose = traj.pose(taus[i]);
        Vec2 p = pose.apply(sim.scene.landmarks[lm_idx]) + seed;
        if (noise_sigma > 0.0) p += noise_sigma * Vec2(gauss(rng), gauss(rng));
        sim.batch.events.push_back(Event{t0 + taus[i], p.x(), p.y(), upol(rng)});
        sim.landmark_of.push_back(static_cast<int>(lm_idx));
    }
    sim.batch.t_start = sim.batch.events.front().t;
    sim.batch.seed = seed;
    return sim;
}

/// RMSE between compensated events and the ground-truth landmark positions
/// at the reference time.
inline double reprojection_rmse(std::span<const Vec2> compensated, const SimBatch& sim,
                                double tau_ref) {
    if (compensated.size() != sim.landmark_of.size())
        throw std::invalid_argument("reprojection_rmse: size mismatch");
    Se2Transform ref_pose = sim.trajectory.pose(tau_ref - sim.t0);
    double acc = 0.0;
    for (std::size_t i = 0; i < compensated.size(); ++i) {
        Vec2 target = ref_pose.apply(sim.scene.landmarks[static_cast<std::size_t>(
                          sim.landmark_of[i])]) +
                      sim.seed;
        acc += (compensated[i] - target).squaredNorm();
    }
    return std::sqrt(acc / static_cast<double>(compensated.size()));
}

/// Compensate with the ground-truth motion itself (no estimation): maps each
/// event exactly back to the reference time.
inline std::vector<Vec2> gt_compensate(const SimBatch& sim, double tau_ref) {
    std::vector<Vec2> out;
    out.reserve(sim.batch.events.size());
    Se2Transform ref_pose = sim.trajectory.pose(tau_ref - sim.t0);
    for (const Event& e : sim.batch.events) {
        Se2Transform pose = sim.trajectory.pose(e.t - sim.t0);
        Vec2 centered(e.x - sim.seed.x(), e.y - sim.seed.y());
        out.push_back(ref_pose.apply(pose.inverse().apply(centered)) + sim.seed);
    }
    return out;
}

struct SimConfig {
    SceneKind scene = SceneKind::tags;
    MotionKind motion = MotionKind::translation;
    std::size_t count = 1250;
    double duration = 0.25;       // seconds per generated span
    double noise_sigma = 0.15;    // px
    double scene_extent = 11.0;   // px half-extent of the pattern
    double peak_theta = 0.2;      // rad per batch duration
    double peak_trans = 8.0;      // px per batch duration
    double batch_duration = 0.25; // motion-bound window, seconds
    int rock_blobs = 30;
    std::uint64_t master_seed = 1;
    Vec2 seed_pos{120.0, 90.0};   // pattern centre in image coordinates
};

/// Deterministic per-run simulation instance derived from the master seed.
inline SimBatch make_sim_run(const SimConfig& cfg, int run_index) {
    const Vec2 seed_pos = cfg.seed_pos;
    std::mt19937_64 rng(mix_seed(cfg.master_seed, static_cast<std::uint64_t>(run_index)));
    Scene scene = cfg.scene == SceneKind::tags
                      ? Scene::tag_lattice(cfg.scene_extent, rng)
                      : Scene::rock_blobs(cfg.scene_extent, cfg.rock_blobs, rng);
    GroundTruthTrajectory traj;
    if (cfg.motion == MotionKind::translation) {
        std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
        std::uniform_real_distribution<double> amp(0.3, 1.0);
        double speed = amp(rng) * cfg.peak_trans / cfg.batch_duration;
        double a = angle(rng);
        traj = GroundTruthTrajectory::constant_velocity(speed * Vec2(std::cos(a), std::sin(a)));
    } else {
        traj = GroundTruthTrajectory::smooth_se2(cfg.duration, cfg.batch_duration, cfg.peak_theta,
                                                 cfg.peak_trans, rng);
    }
    return generate_events(std::move(scene), traj, seed_pos, 0.0, cfg.duration, cfg.count,
                           cfg.noise_sigma, rng);
}

struct RunResult {
    double rmse = 0.0;
    double raw_rmse = 0.0;
    bool success = false;
    bool converged = false;
    double seconds = 0.0;
    int iterations = 0;
    double lml_initial = 0.0;
    double lml_final = 0.0;
};

struct EvalReport {
    std::vector<RunResult> runs;
    double gate = 7.0;
    double success_rate = 0.0;
    std::optional<double> mean_rmse_over_successes;
    double mean_seconds = 0.0;
};

/// Score one simulated batch with the motion-compensation pipeline.
inline RunResult score_run(const SimBatch& sim, const MotionCompConfig& mcfg, double gate) {
    RunResult r;
    auto start = std::chrono::steady_clock::now();
    MotionCompResult res = compensate(sim.batch, mcfg);
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    r.rmse = reprojection_rmse(res.compensated, sim, sim.batch.t_start);
    std::vector<Vec2> raw;
    raw.reserve(sim.batch.events.size());
    for (const Event& e : sim.batch.events) raw.emplace_back(e.x, e.y);
    r.raw_rmse = reprojection_rmse(raw, sim, sim.batch.t_start);
    r.success = r.rmse < gate;
    r.converged = res.converged;
    r.iterations = res.iterations;
    r.lml_initial = res.lml_initial;
    r.lml_final = res.lml_final;
    return r;
}

/// Run the reprojection benchmark: independent (scene, trajectory) pairs,
/// success gate on RMSE, aggregate mean over successes only.
inline EvalReport run_benchmark(int n_runs, const SimConfig& scfg, const MotionCompConfig& mcfg,
                                double gate, int threads = 1) {
    if (n_runs < 1) throw std::invalid_argument("run_benchmark: n_runs must be >= 1");
    EvalReport report;
    report.gate = gate;
    report.runs.resize(static_cast<std::size_t>(n_runs));

    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n_runs) return;
            SimBatch sim = make_sim_run(scfg, i);
            report.runs[static_cast<std::size_t>(i)] = score_run(sim, mcfg, gate);
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    int n_success = 0;
    double rmse_acc = 0.0, sec_acc = 0.0;
    for (const auto& r : report.runs) {
        if (r.success) {
            ++n_success;
            rmse_acc += r.rmse;
        }
        sec_acc += r.seconds;
    }
    report.success_rate = static_cast<double>(n_success) / n_runs;
    if (n_success > 0) report.mean_rmse_over_successes = rmse_acc / n_success;
    report.mean_seconds = sec_acc / n_runs;
    return report;
}

}  // namespace evgp
