#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evgp/common.hpp"
#include "evgp/event.hpp"
#include "evgp/fields.hpp"
#include "evgp/homography.hpp"
#include "evgp/motion_comp.hpp"
#include "evgp/se2.hpp"
#include "evgp/skeleton.hpp"

namespace evgp {

enum class TrackEndReason {
    none,
    stream_depleted,
    lml_failure,
    divergence,
    border,
    registration_failure,
};

inline const char* to_string(TrackEndReason r) {
    switch (r) {
        case TrackEndReason::none: return "none";
        case TrackEndReason::stream_depleted: return "stream_depleted";
        case TrackEndReason::lml_failure: return "lml_failure";
        case TrackEndReason::divergence: return "divergence";
        case TrackEndReason::border: return "border";
        case TrackEndReason::registration_failure: return "registration_failure";
    }
    return "unknown";
}

enum class RegistrationMode { se2_only, batch_to_batch, full };

inline const char* to_string(RegistrationMode m) {
    switch (m) {
        case RegistrationMode::se2_only: return "se2-only";
        case RegistrationMode::batch_to_batch: return "batch-to-batch";
        case RegistrationMode::full: return "full";
    }
    return "unknown";
}

struct TrackerConfig {
    SensorGeometry sensor;
    MotionCompConfig motion;
    RegistrationOptions registration;
    SqExpKernel field_kernel{1.0, 0.25};
    double field_noise = 1e-2;
    std::size_t field_max_support = 1000;
    double field_floor = 1e-12;
    double divergence_threshold = 3.0;  // px between homography and SE(2) seed predictions
    double border_margin = 17.0;        // px; default patch_radius + 2
    int template_threshold = 2;         // accumulation counts for binarization
    double template_margin = 6.0;       // extra template half-extent beyond the patch radius
    RegistrationMode mode = RegistrationMode::full;
    bool warm_start = true;
};

/// Accumulated histogram of motion-compensated events over the patch window,
/// binarized and skeletonized into a set of virtual events. Lives in the
/// first batch's compensated frame.
class DynamicTemplate {
  public:
    DynamicTemplate() = default;

    DynamicTemplate(Vec2 center, double half_extent, int threshold, double anchor_time)
        : origin_(center - Vec2::Constant(std::ceil(half_extent))),
          size_(2 * static_cast<int>(std::ceil(half_extent)) + 1),
          threshold_(threshold),
          anchor_time_(anchor_time),
          counts_(static_cast<std::size_t>(size_) * size_, 0) {}

    void accumulate(std::span<const Vec2> points) {
        for (const Vec2& p : points) {
            int ix = static_cast<int>(std::floor(p.x() - origin_.x()));
            int iy = static_cast<int>(std::floor(p.y() - origin_.y()));
            if (ix < 0 || iy < 0 || ix >= size_ || iy >= size_) continue;
            ++counts_[static_cast<std::size_t>(iy) * size_ + ix];
        }
        dirty_ = true;
    }

    /// Rebuild the skeleton and virtual events from the current counts.
    void rebuild() {
        BinaryGrid mask(size_, size_);
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x)
                mask.set(x, y, counts_[static_cast<std::size_t>(y) * size_ + x] >= threshold_);
        binarized_cells_ = mask.count();
        skeleton_ = skeletonize(mask);
        virtual_events_.clear();
        for (int y = 0; y < size_; ++y)
            for (int x = 0; x < size_; ++x)
                if (skeleton_.at(x, y))
                    virtual_events_.push_back(origin_ + Vec2(x + 0.5, y + 0.5));
        dirty_ = false;
    }

    bool empty() const { return virtual_events_.empty(); }
    const std::vector<Vec2>& virtual_events() const { return virtual_events_; }
    const BinaryGrid& skeleton() const { return skeleton_; }
    std::size_t binarized_cells() const { return binarized_cells_; }
    std::size_t grid_cells() const { return counts_.size(); }
    const std::vector<int>& counts() const { return counts_; }
    int grid_size() const { return size_; }
    Vec2 origin() const { return origin_; }
    double anchor_time() const { return anchor_time_; }
    bool dirty() const { return dirty_; }

  private:
    Vec2 origin_ = Vec2::Zero();
    int size_ = 0;
    int threshold_ = 2;
    double anchor_time_ = 0.0;
    std::vector<int> counts_;
    BinaryGrid skeleton_;
    std::vector<Vec2> virtual_events_;
    std::size_t binarized_cells_ = 0;
    bool dirty_ = false;
};

/// Convenience builder from already-accumulated compensated point sets.
inline DynamicTemplate build_template(std::span<const std::vector<Vec2>> point_sets, Vec2 center,
                                      double half_extent, int threshold, double anchor_time) {
    DynamicTemplate t(center, half_extent, threshold, anchor_time);
    for (const auto& pts : point_sets) t.accumulate(pts);
    t.rebuild();
    return t;
}

struct BatchRecord {
    double t_start = 0.0;
    double t_end = 0.0;
    Se2Trajectory trajectory;
    Homography relative;  // maps this batch's frame to the previous batch's frame
    Homography chain;     // maps the track-origin frame to this batch's frame
    double lml_initial = 0.0;
    double lml_final = 0.0;
    int iterations = 0;
    bool registered = false;
    double registration_cost = 0.0;
    Vec2 seed = Vec2::Zero();
};

struct Track {
    int id = 0;
    Vec2 seed0 = Vec2::Zero();
    TrackEndReason end_reason = TrackEndReason::none;
    std::vector<std::pair<double, Vec2>> history;  // (t, seed) at batch boundaries
    std::vector<BatchRecord> records;

    bool ended() const { return end_reason != TrackEndReason::none; }
};

/// Continuous seed position between two batch boundaries: the previous
/// batch's SE(2) motion applied to the previous seed, plus a linear term that
/// closes the gap to the homography prediction at the new boundary.
inline Vec2 interpolate_seed(const Se2Trajectory& prev_traj, const Vec2& seed_prev,
                             const Vec2& seed_new, double tau_prev, double tau_new, double t) {
    Vec2 se2_end = prev_traj.warp_from_ref(tau_new, seed_prev);
    Vec2 alpha = (tau_new > tau_prev) ? ((seed_new - se2_end) / (tau_new - tau_prev)).eval()
                                      : Vec2::Zero().eval();
    return prev_traj.warp_from_ref(t, seed_prev) + (t - tau_prev) * alpha;
}

inline bool near_border(const Vec2& s, const SensorGeometry& sensor, double margin) {
    return s.x() < margin || s.y() < margin || s.x() > sensor.width - 1 - margin ||
           s.y() > sensor.height - 1 - margin;
}

/// Per-batch termination test: motion-compensation failure, disagreement
/// between the homography and SE(2) seed predictions, or border proximity.
inline std::optional<TrackEndReason> check_termination(const MotionCompResult& motion,
                                                       const Vec2& seed_homography,
                                                       const Vec2& seed_se2_prediction,
                                                       const TrackerConfig& cfg) {
    if (!motion.converged) return TrackEndReason::lml_failure;
    if ((seed_homography - seed_se2_prediction).norm() > cfg.divergence_threshold)
        return TrackEndReason::divergence;
    if (near_border(seed_homography, cfg.sensor, cfg.border_margin)) return TrackEndReason::border;
    return std::nullopt;
}

/// Full pattern-tracking pipeline: sequential batch collection, SE(2) motion
/// compensation, homography registration against the previous batch and the
/// dynamic template, seed update and termination handling.
inline Track track_pattern(std::span<const Event> stream, const Vec2& s0, double t0,
                           const TrackerConfig& cfg, int id = 0) {
    Track track;
    track.id = id;
    track.seed0 = s0;

    const bool use_homography = cfg.mode != RegistrationMode::se2_only;
    const bool use_template = cfg.mode == RegistrationMode::full;

    Vec2 seed = s0;          // homography-updated seed at the latest boundary
    Vec2 seed_collect = s0;  // SE(2)-propagated centre for the next collection
    Homography chain = Homography::identity();
    std::optional<Se2Trajectory> prev_traj;
    std::optional<DistanceField> prev_field;
    std::vector<Vec2> prev_points;
    std::optional<DistanceField> template_field;
    DynamicTemplate templ;

    std::size_t cursor = 0;
    {
        auto it = std::lower_bound(stream.begin(), stream.end(), t0,
                                   [](const Event& e, double t) { return e.t < t; });
        cursor = static_cast<std::size_t>(it - stream.begin());
    }

    for (std::size_t n = 0;; ++n) {
        CollectResult col = collect_batch_from(stream, cursor, seed_collect,
                                               cfg.motion.batch_size, cfg.sensor.patch_radius);
        if (col.depleted) {
            track.end_reason = TrackEndReason::stream_depleted;
            return track;
        }
        cursor = col.next_index;
        const EventBatch& batch = col.batch;
        const double tau_n = batch.t_start;

        std::optional<WarmStart> warm;
        if (cfg.warm_start && prev_traj) warm = extrapolate_warm_start(*prev_traj);
        MotionCompResult mres = compensate(batch, cfg.motion, warm);

        BatchRecord rec;
        rec.t_start = tau_n;
        rec.t_end = batch.t_end();
        rec.trajectory = mres.trajectory;
        rec.lml_initial = mres.lml_initial;
        rec.lml_final = mres.lml_final;
        rec.iterations = mres.iterations;

        if (n == 0) {
            track.history.emplace_back(tau_n, seed);
            rec.chain = chain;
            rec.seed = seed;
            if (!mres.converged) {
                track.records.push_back(std::move(rec));
                track.end_reason = TrackEndReason::lml_failure;
                return track;
            }
            if (use_template) {
                templ = DynamicTemplate(s0, cfg.sensor.patch_radius + cfg.template_margin,
                                        cfg.template_threshold, tau_n);
                templ.accumulate(mres.compensated);
                templ.rebuild();
                if (!templ.empty())
                    template_field = build_distance_field(templ.virtual_events(), cfg.field_kernel,
                                                          cfg.field_noise, cfg.field_max_support,
                                                          cfg.field_floor);
            }
            if (use_homography)
                prev_field = build_distance_field(mres.compensated, cfg.field_kernel,
                                                  cfg.field_noise, cfg.field_max_support,
                                                  cfg.field_floor);
            prev_points = std::move(mres.compensated);
            prev_traj = std::move(mres.trajectory);
            seed_collect = prev_traj->warp_from_ref(rec.t_end, seed);
            track.records.push_back(std::move(rec));
            continue;
        }

        if (!mres.converged) {
            track.records.push_back(std::move(rec));
            track.end_reason = TrackEndReason::lml_failure;
            return track;
        }

        const Vec2 seed_pred = prev_traj->warp_from_ref(tau_n, seed);
        const double tau_prev = track.records.back().t_start;

        Homography h_rel;  // current frame -> previous frame
        try {
            Mat3 se2_rel = prev_traj->warp_matrix(tau_n);  // tau_n coords -> tau_prev coords
            if (!use_homography) {
                h_rel = Homography::from_matrix(se2_rel);
            } else {
                std::optional<DistanceField> cur_field = build_distance_field(
                    mres.compensated, cfg.field_kernel, cfg.field_noise, cfg.field_max_support,
                    cfg.field_floor);

                std::vector<RegistrationConstraint> cons;
                RegistrationConstraint prev_con;
                prev_con.fixed_field = &*prev_field;
                prev_con.moving_points = mres.compensated;
                prev_con.moving_field = &*cur_field;
                prev_con.fixed_points = prev_points;
                cons.push_back(prev_con);
                if (use_template && template_field) {
                    RegistrationConstraint tcon;
                    tcon.fixed_field = &*template_field;
                    tcon.moving_points = mres.compensated;
                    tcon.moving_field = &*cur_field;
                    tcon.fixed_points = templ.virtual_events();
                    tcon.pre = chain.H.inverse();  // previous frame -> origin frame
                    cons.push_back(tcon);
                }
                RegistrationResult reg = register_homography(
                    cons, Homography::from_matrix(se2_rel), cfg.registration);
                if (!reg.converged) {
                    track.records.push_back(std::move(rec));
                    track.end_reason = TrackEndReason::registration_failure;
                    return track;
                }
                h_rel = reg.h;
                rec.registered = true;
                rec.registration_cost = reg.final_cost;
                prev_field = std::move(cur_field);
            }
        } catch (const std::invalid_argument&) {
            track.records.push_back(std::move(rec));
            track.end_reason = TrackEndReason::registration_failure;
            return track;
        }

        Homography chain_new;
        Vec2 seed_new;
        try {
            chain_new = Homography::from_matrix(h_rel.H.inverse() * chain.H);
            seed_new = chain_new.project(s0);
        } catch (const std::exception&) {
            track.records.push_back(std::move(rec));
            track.end_reason = TrackEndReason::registration_failure;
            return track;
        }

        rec.relative = h_rel;
        rec.chain = chain_new;
        rec.seed = seed_new;

        std::optional<TrackEndReason> reason = check_termination(mres, seed_new, seed_pred, cfg);
        if (reason == TrackEndReason::divergence) {
            // registration is suspect: do not commit the new seed
            track.records.push_back(std::move(rec));
            track.end_reason = *reason;
            return track;
        }

        chain = chain_new;
        seed = seed_new;
        track.history.emplace_back(tau_n, seed);
        (void)tau_prev;

        if (reason == TrackEndReason::border) {
            track.records.push_back(std::move(rec));
            track.end_reason = *reason;
            return track;
        }

        if (use_template) {
            try {
                Mat3 to_origin = chain.H.inverse();
                std::vector<Vec2> warped;
                warped.reserve(mres.compensated.size());
                for (const Vec2& p : mres.compensated) {
                    Eigen::Vector3d v = to_origin * Eigen::Vector3d(p.x(), p.y(), 1.0);
                    if (std::abs(v.z()) > 1e-12) warped.emplace_back(v.x() / v.z(), v.y() / v.z());
                }
                templ.accumulate(warped);
                templ.rebuild();
                if (!templ.empty())
                    template_field = build_distance_field(templ.virtual_events(), cfg.field_kernel,
                                                          cfg.field_noise, cfg.field_max_support,
                                                          cfg.field_floor);
                else
                    template_field.reset();
            } catch (const std::exception&) {
                template_field.reset();
            }
        }

        prev_points = std::move(mres.compensated);
        prev_traj = std::move(mres.trajectory);
        seed_collect = prev_traj->warp_from_ref(rec.t_end, seed);
        track.records.push_back(std::move(rec));
    }
}

/// Track output: one `id t x y` line per batch boundary plus the end reason.
inline std::string format_track(const Track& track) {
    std::string out;
    for (const auto& [t, pos] : track.history)
        out += std::to_string(track.id) + " " + format_double(t) + " " + format_double(pos.x()) +
               " " + format_double(pos.y()) + "\n";
    out += std::string("# ended ") + to_string(track.end_reason) + "\n";
    return out;
}

}  // namespace evgp
