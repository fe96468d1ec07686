#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <random>

#include "evgp/event.hpp"

using namespace evgp;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& contents) {
    fs::path p = fs::temp_directory_path() / name;
    std::ofstream out(p);
    out << contents;
    return p;
}

}  // namespace

TEST_CASE("parse_event_file maps fields directly") {
    auto p = write_temp("evgp_parse_basic.txt", "0.004000 120 85 1\n");
    auto events = parse_event_file(p, SensorGeometry{640, 480, 15.0});
    REQUIRE(events.size() == 1);
    CHECK(events[0].t == 0.004);
    CHECK(events[0].x == 120.0);
    CHECK(events[0].y == 85.0);
    CHECK(events[0].polarity == 1);
}

TEST_CASE("parse_event_file handles empty files and comments") {
    auto p = write_temp("evgp_parse_empty.txt", "");
    CHECK(parse_event_file(p, {}).empty());

    auto p2 = write_temp("evgp_parse_comment.txt", "# header\n\n0.1 3 4 0\n");
    CHECK(parse_event_file(p2, {}).size() == 1);
}

TEST_CASE("parse_event_file drops out-of-bounds events") {
    auto p = write_temp("evgp_parse_oob.txt", "0.1 700 10 0\n0.2 10 10 1\n");
    ParseStats stats;
    auto events = parse_event_file(p, SensorGeometry{640, 480, 15.0}, &stats);
    REQUIRE(events.size() == 1);
    CHECK(stats.dropped_out_of_bounds == 1);
}

TEST_CASE("parse_event_file reports malformed lines with their number") {
    auto p = write_temp("evgp_parse_bad.txt", "0.1 3 4 0\nnot an event\n");
    CHECK_THROWS_WITH(parse_event_file(p, {}), Catch::Matchers::ContainsSubstring("line 2"));

    auto p2 = write_temp("evgp_parse_badpol.txt", "0.1 3 4 7\n");
    CHECK_THROWS_AS(parse_event_file(p2, {}), ParseError);
}

TEST_CASE("parse_event_file re-sorts non-monotonic timestamps with a warning") {
    auto p = write_temp("evgp_parse_sort.txt", "0.2 1 1 0\n0.1 2 2 1\n");
    ParseStats stats;
    auto events = parse_event_file(p, {}, &stats);
    REQUIRE(events.size() == 2);
    CHECK(events[0].t == 0.1);
    CHECK(stats.resorted);
    REQUIRE_FALSE(stats.warnings.empty());
}

TEST_CASE("event files round-trip exactly") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ut(0.0, 10.0), ux(0.0, 239.9), uy(0.0, 179.9);
    std::vector<Event> events;
    for (int i = 0; i < 200; ++i)
        events.push_back(Event{ut(rng), ux(rng), uy(rng), static_cast<int>(rng() & 1)});
    std::sort(events.begin(), events.end(), [](auto& a, auto& b) { return a.t < b.t; });

    fs::path p = fs::temp_directory_path() / "evgp_roundtrip.txt";
    write_event_file(p, events, {"written by test"});
    auto back = parse_event_file(p, SensorGeometry{240, 180, 15.0});
    REQUIRE(back.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(back[i].t == events[i].t);
        CHECK(back[i].x == events[i].x);
        CHECK(back[i].y == events[i].y);
        CHECK(back[i].polarity == events[i].polarity);
    }
}

TEST_CASE("collect_batch returns a sorted window subsequence of the requested size") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> ux(100.0, 140.0), uy(70.0, 110.0);
    std::vector<Event> stream;
    for (int i = 0; i < 5000; ++i)
        stream.push_back(Event{i * 1e-4, ux(rng), uy(rng), 0});

    auto res = collect_batch(stream, {120.0, 90.0}, 0.0, 1250, 25.0);
    REQUIRE_FALSE(res.depleted);
    REQUIRE(res.batch.events.size() == 1250);
    CHECK(res.batch.t_start == res.batch.events.front().t);
    for (std::size_t i = 1; i < res.batch.events.size(); ++i)
        CHECK(res.batch.events[i - 1].t <= res.batch.events[i].t);
    // subsequence of the stream
    for (std::size_t i = 1; i < res.source_indices.size(); ++i)
        CHECK(res.source_indices[i - 1] < res.source_indices[i]);
}

TEST_CASE("collect_batch far from all events is a depleted empty batch") {
    std::vector<Event> stream{{0.1, 10.0, 10.0, 0}, {0.2, 11.0, 10.0, 1}};
    auto res = collect_batch(stream, {200.0, 150.0}, 0.0, 10, 15.0);
    CHECK(res.depleted);
    CHECK(res.batch.events.empty());
}

TEST_CASE("collect_batch includes events at Chebyshev distance exactly radius") {
    std::vector<Event> stream{{0.1, 115.0, 90.0, 0}};
    auto res = collect_batch(stream, {100.0, 90.0}, 0.0, 1, 15.0);
    CHECK_FALSE(res.depleted);
    REQUIRE(res.batch.events.size() == 1);
}

TEST_CASE("collect_batch honors t_from") {
    std::vector<Event> stream{{0.1, 10, 10, 0}, {0.2, 10, 10, 0}, {0.3, 10, 10, 0}};
    auto res = collect_batch(stream, {10.0, 10.0}, 0.15, 2, 5.0);
    REQUIRE(res.batch.events.size() == 2);
    CHECK(res.batch.events[0].t == 0.2);
}

TEST_CASE("downsample_batch keeps uniformly strided indices") {
    EventBatch b;
    for (int i = 0; i < 10; ++i) b.events.push_back(Event{0.1 * i, double(i), 0.0, 0});
    b.t_start = 0.0;

    auto identity = downsample_batch(b, 10);
    CHECK(identity.events.size() == 10);
    for (int i = 0; i < 10; ++i) CHECK(identity.events[i].x == double(i));

    auto half = downsample_batch(b, 5);
    REQUIRE(half.events.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(half.events[i].x == double(2 * i));
    CHECK(half.t_start == b.t_start);
}

TEST_CASE("downsample_batch 1250 -> 400 is a strictly increasing subsequence from index 0") {
    EventBatch b;
    for (int i = 0; i < 1250; ++i) b.events.push_back(Event{1e-4 * i, double(i), 0.0, 0});
    auto out = downsample_batch(b, 400);
    REQUIRE(out.events.size() == 400);
    CHECK(out.events.front().x == 0.0);
    for (std::size_t i = 1; i < out.events.size(); ++i)
        CHECK(out.events[i - 1].x < out.events[i].x);
}

TEST_CASE("downsample_batch validates the target") {
    EventBatch b;
    b.events.push_back(Event{0.0, 0.0, 0.0, 0});
    CHECK_THROWS_AS(downsample_batch(b, 0), std::invalid_argument);
    CHECK_THROWS_AS(downsample_batch(b, 2), std::invalid_argument);
}
