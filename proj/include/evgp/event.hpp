#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "evgp/common.hpp"

namespace evgp {

/// One asynchronous camera event. Coordinates are sub-pixel after transforms.
struct Event {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    int polarity = 0;
};

struct SensorGeometry {
    int width = 240;
    int height = 180;
    double patch_radius = 15.0;  // half-size of the square window around a seed
};

/// Fixed-size batch of events collected around a seed position.
/// t_start is the reference time of the batch (time of the first event).
struct EventBatch {
    std::vector<Event> events;
    double t_start = 0.0;
    Vec2 seed = Vec2::Zero();

    std::size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }
    double t_end() const { return events.empty() ? t_start : events.back().t; }
};

struct ParseStats {
    std::size_t dropped_out_of_bounds = 0;
    bool resorted = false;
    std::vector<std::string> warnings;
};

class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace detail

/// Parse an ASCII event file: one `t x y p` line per event, `#` lines ignored.
/// Events landing outside the sensor are dropped; non-monotonic timestamps are
/// re-sorted with a warning in `stats`.
inline std::vector<Event> parse_event_file(const std::filesystem::path& path,
                                           const SensorGeometry& geom,
                                           ParseStats* stats = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open event file: " + path.string());

    std::vector<Event> events;
    std::string line;
    std::size_t line_no = 0;
    bool monotonic = true;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = detail::split_fields(line);
        if (fields.empty()) continue;
        if (fields[0][0] == '#') continue;
        if (fields.size() != 4)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        Event e;
        try {
            e.t = parse_double(fields[0]);
            e.x = parse_double(fields[1]);
            e.y = parse_double(fields[2]);
            double p = parse_double(fields[3]);
            if (p != 0.0 && p != 1.0) throw std::invalid_argument("polarity must be 0 or 1");
            e.polarity = static_cast<int>(p);
        } catch (const std::invalid_argument& ex) {
            throw ParseError("line " + std::to_string(line_no) + ": " + ex.what());
        }
        if (!std::isfinite(e.t) || e.t < 0.0 || !std::isfinite(e.x) || !std::isfinite(e.y))
            throw ParseError("line " + std::to_string(line_no) + ": non-finite or negative-time event");
        if (e.x < 0.0 || e.x >= geom.width || e.y < 0.0 || e.y >= geom.height) {
            if (stats) ++stats->dropped_out_of_bounds;
            continue;
        }
        if (!events.empty() && e.t < events.back().t) monotonic = false;
        events.push_back(e);
    }
    if (!monotonic) {
        std::stable_sort(events.begin(), events.end(),
                         [](const Event& a, const Event& b) { return a.t < b.t; });
        if (stats) {
            stats->resorted = true;
            stats->warnings.push_back("non-monotonic timestamps in " + path.string() +
                                      "; events re-sorted");
        }
    }
    return events;
}

inline std::string format_event_line(const Event& e) {
    return format_double(e.t) + " " + format_double(e.x) + " " + format_double(e.y) + " " +
           std::to_string(e.polarity);
}

inline void write_event_file(const std::filesystem::path& path, std::span<const Event> events,
                             const std::vector<std::string>& header_comments = {}) {
    std::string out;
    for (const auto& h : header_comments) out += "# " + h + "\n";
    for (const auto& e : events) out += format_event_line(e) + "\n";
    atomic_write_file(path, out);
}

struct CollectResult {
    EventBatch batch;
    bool depleted = false;          // fewer qualifying events than requested
    std::size_t next_index = 0;     // stream index just past the last consumed event
    std::vector<std::size_t> source_indices;  // stream index of each collected event
};

/// Collect the first `size` events at stream index >= start_index that fall in
/// the Chebyshev window of `radius` around `seed` (boundary inclusive).
inline CollectResult collect_batch_from(std::span<const Event> stream, std::size_t start_index,
                                        const Vec2& seed, std::size_t size, double radius) {
    CollectResult res;
    res.batch.seed = seed;
    res.next_index = start_index;
    for (std::size_t i = start_index; i < stream.size(); ++i) {
        const Event& e = stream[i];
        if (std::max(std::abs(e.x - seed.x()), std::abs(e.y - seed.y())) <= radius) {
            res.batch.events.push_back(e);
            res.source_indices.push_back(i);
            res.next_index = i + 1;
            if (res.batch.events.size() == size) break;
        }
    }
    res.depleted = res.batch.events.size() < size;
    res.batch.t_start = res.batch.events.empty() ? 0.0 : res.batch.events.front().t;
    return res;
}

/// Same, but starting from the first event with t >= t_from.
inline CollectResult collect_batch(std::span<const Event> stream, const Vec2& seed, double t_from,
                                   std::size_t size, double radius) {
    auto it = std::lower_bound(stream.begin(), stream.end(), t_from,
                               [](const Event& e, double t) { return e.t < t; });
    auto res = collect_batch_from(stream, static_cast<std::size_t>(it - stream.begin()), seed,
                                  size, radius);
    if (res.batch.events.empty()) res.batch.t_start = t_from;
    return res;
}

/// Keep `target` events at uniformly strided indices (first event always kept).
inline EventBatch downsample_batch(const EventBatch& batch, std::size_t target) {
    if (target < 1 || target > batch.events.size())
        throw std::invalid_argument("downsample target out of range");
    EventBatch out;
    out.t_start = batch.t_start;
    out.seed = batch.seed;
    out.events.reserve(target);
    const std::size_t n = batch.events.size();
    for (std::size_t k = 0; k < target; ++k) {
        std::size_t idx = (k * n) / target;
        out.events.push_back(batch.events[idx]);
    }
    return out;
}

}  // namespace evgp
