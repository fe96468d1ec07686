#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "evgp/se2.hpp"

using namespace evgp;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

EventBatch uniform_batch(std::size_t n, double t0, double t1, Vec2 seed = {0, 0}) {
    EventBatch b;
    b.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        double t = t0 + (t1 - t0) * static_cast<double>(i) / static_cast<double>(n - 1);
        b.events.push_back(Event{t, seed.x(), seed.y(), 0});
    }
    b.t_start = t0;
    return b;
}

}  // namespace

TEST_CASE("apply_se2 basic moves") {
    CHECK((apply_se2({0.0, {0, 0}}, {3, 4}) - Vec2(3, 4)).norm() == 0.0);
    CHECK_THAT((apply_se2({std::numbers::pi / 2, {0, 0}}, {1, 0}) - Vec2(0, 1)).norm(),
               WithinAbs(0.0, 1e-15));
    CHECK((apply_se2({0.0, {2, -1}}, {3, 4}) - Vec2(5, 3)).norm() == 0.0);
}

TEST_CASE("se2 transforms preserve distances and invert cleanly") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 50; ++i) {
        Se2Transform t{u(rng), {u(rng), u(rng)}};
        Vec2 a(u(rng), u(rng)), b(u(rng), u(rng));
        CHECK_THAT((t.apply(a) - t.apply(b)).norm(), WithinAbs((a - b).norm(), 1e-10));
        CHECK_THAT((t.inverse().apply(t.apply(a)) - a).norm(), WithinAbs(0.0, 1e-10));
    }
}

TEST_CASE("transform matrix matches apply") {
    Se2Transform t{0.3, {1.5, -0.7}};
    Vec2 p(2.0, 3.0);
    Eigen::Vector3d h = t.matrix() * Eigen::Vector3d(p.x(), p.y(), 1.0);
    CHECK_THAT((Vec2(h.x(), h.y()) - t.apply(p)).norm(), WithinAbs(0.0, 1e-14));
    CHECK_THAT(t.matrix().determinant(), WithinRel(1.0, 1e-12));
}

TEST_CASE("from_batch places inducing times every events_per_state-th event plus the end") {
    auto batch = uniform_batch(1250, 0.0, 0.1249);
    auto traj = Se2Trajectory::from_batch(batch, 250, 3.0, 1e-6);
    REQUIRE(traj.num_states() == 6);
    const auto& times = traj.inducing_times();
    CHECK(times[0] == batch.events[0].t);
    CHECK(times[1] == batch.events[250].t);
    CHECK(times[4] == batch.events[1000].t);
    CHECK(times[5] == batch.events[1249].t);

    // lengthscale = factor x mean spacing
    double mean_spacing = (times.back() - times.front()) / 5.0;
    CHECK_THAT(traj.kernel().lengthscale, WithinRel(3.0 * mean_spacing, 1e-12));
    CHECK(traj.kernel().scale == 1.0);
}

TEST_CASE("from_batch degenerates to a single state for short batches") {
    auto batch = uniform_batch(100, 0.0, 0.01);
    auto traj = Se2Trajectory::from_batch(batch, 250, 3.0, 1e-6);
    CHECK(traj.num_states() == 1);
    CHECK(traj.inducing_times()[0] == batch.t_start);
}

TEST_CASE("zero inducing values give the identity everywhere") {
    auto batch = uniform_batch(500, 0.0, 0.05);
    auto traj = Se2Trajectory::from_batch(batch, 250, 3.0, 1e-6);
    for (double t : {-0.1, 0.0, 0.025, 0.05, 0.2}) {
        Se2Transform pose = traj.pose_at(t);
        CHECK(pose.theta == 0.0);
        CHECK(pose.p.norm() == 0.0);
    }
    EventBatch b2 = uniform_batch(10, 0.0, 0.05, {7.0, 9.0});
    auto traj2 = Se2Trajectory::from_batch(b2, 250, 3.0, 1e-6);
    auto comp = compensate_batch(traj2, b2);
    for (std::size_t i = 0; i < comp.size(); ++i) {
        CHECK(comp[i].x() == b2.events[i].x);
        CHECK(comp[i].y() == b2.events[i].y);
    }
}

TEST_CASE("single-state trajectory interpolates its inducing value") {
    Se2Trajectory traj({0.0}, SqExpKernel{1.0, 1.0}, 0.0, {0, 0}, 0.0);
    Eigen::VectorXd p(3);
    p << 0.1, 0.0, 0.0;
    traj.set_parameters(p);
    CHECK_THAT(traj.pose_at(0.0).theta, WithinRel(0.1, 1e-12));
    CHECK_THAT(traj.pose_at(1.0).theta, WithinRel(0.1 * std::exp(-0.5), 1e-12));
}

TEST_CASE("pose_at is continuous in time") {
    auto batch = uniform_batch(500, 0.0, 0.05);
    auto traj = Se2Trajectory::from_batch(batch, 100, 3.0, 1e-6);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g(0.0, 0.1);
    Eigen::VectorXd params(3 * traj.num_states());
    for (int i = 0; i < params.size(); ++i) params[i] = g(rng);
    traj.set_parameters(params);

    // slope is bounded by value scale / lengthscale; delta = 1e-6 s
    double bound = 10.0 * 1e-6 / traj.kernel().lengthscale;
    for (double t : {0.01, 0.025, 0.04}) {
        CHECK(std::abs(traj.pose_at(t).theta - traj.pose_at(t + 1e-6).theta) < bound);
    }
}

TEST_CASE("compensation round-trips events generated from a known trajectory") {
    auto batch = uniform_batch(300, 0.0, 0.05, {50.0, 40.0});
    auto traj = Se2Trajectory::from_batch(batch, 100, 3.0, 1e-6);
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Eigen::VectorXd params(3 * traj.num_states());
    for (int i = 0; i < params.size(); ++i)
        params[i] = (i < static_cast<int>(traj.num_states())) ? 0.05 * g(rng) : 1.5 * g(rng);
    traj.set_parameters(params);

    // place the moving point at the trajectory's inverse; compensation must
    // recover the reference position
    Vec2 ref(52.0, 38.5);
    EventBatch moving = batch;
    for (auto& e : moving.events) {
        Vec2 p = traj.warp_from_ref(e.t, ref);
        e.x = p.x();
        e.y = p.y();
    }
    auto comp = compensate_batch(traj, moving);
    for (const Vec2& c : comp) CHECK_THAT((c - ref).norm(), WithinAbs(0.0, 1e-6));
}

TEST_CASE("warp_matrix agrees with warp_to_ref") {
    auto batch = uniform_batch(300, 0.0, 0.05, {12.0, 8.0});
    auto traj = Se2Trajectory::from_batch(batch, 100, 3.0, 1e-6);
    Eigen::VectorXd params(3 * traj.num_states());
    params.setLinSpaced(params.size(), -0.05, 0.08);
    traj.set_parameters(params);

    for (double t : {0.0, 0.02, 0.05}) {
        Vec2 p(14.0, 6.5);
        Eigen::Vector3d h = traj.warp_matrix(t) * Eigen::Vector3d(p.x(), p.y(), 1.0);
        CHECK_THAT((Vec2(h.x(), h.y()) - traj.warp_to_ref(t, p)).norm(), WithinAbs(0.0, 1e-12));
    }
}

TEST_CASE("trajectory dump lists one line per state") {
    Se2Trajectory traj({0.0, 0.5}, SqExpKernel{1.0, 1.0}, 1e-6, {0, 0}, 0.0);
    std::ostringstream os;
    traj.dump(os);
    std::string s = os.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 2);
}
