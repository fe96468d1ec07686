// Command-line front door: simulate | compensate | track | eval.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "evgp/config.hpp"
#include "evgp/event.hpp"
#include "evgp/motion_comp.hpp"
#include "evgp/sim.hpp"
#include "evgp/tracker.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "evgp 1.0.0";

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;  // key=value
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "configuration file (section.key = value lines)");
    cmd->add_option("--set", c.overrides, "override a config entry, e.g. --set motion.batch_size=400")
        ->type_name("KEY=VALUE");
    cmd->add_option("--threads", c.threads, "worker thread cap (0 = hardware)");
}

evgp::Config resolve_config(const CommonOpts& c) {
    evgp::Config cfg;
    if (!c.config_path.empty()) cfg = evgp::load_config(c.config_path);
    for (const auto& kv : c.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw evgp::ConfigError("--set expects KEY=VALUE, got '" + kv + "'");
        auto trim = [](std::string s) {
            while (!s.empty() && s.front() == ' ') s.erase(s.begin());
            while (!s.empty() && s.back() == ' ') s.pop_back();
            return s;
        };
        evgp::config_set(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    evgp::validate_config(cfg);
    return cfg;
}

int effective_threads(const CommonOpts& c) {
    if (c.threads > 0) return c.threads;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<std::string> config_comment_lines(const evgp::Config& cfg) {
    std::vector<std::string> out;
    for (const auto& [k, v] : evgp::config_items(cfg)) out.push_back("config " + k + " = " + v);
    return out;
}

json config_json(const evgp::Config& cfg) {
    json j;
    for (const auto& [k, v] : evgp::config_items(cfg)) j[k] = v;
    return j;
}

// ---------------------------------------------------------------- simulate

int run_simulate(const CommonOpts& common, const std::string& out_path,
                 const std::string& gt_path) {
    evgp::Config cfg = resolve_config(common);
    evgp::SimBatch sim = evgp::make_sim_run(cfg.sim, 0);

    std::vector<std::string> header = config_comment_lines(cfg);
    evgp::write_event_file(out_path, sim.batch.events, header);

    std::string gt;
    for (const auto& h : header) gt += "# " + h + "\n";
    gt += "# seed " + evgp::format_double(sim.seed.x()) + " " +
          evgp::format_double(sim.seed.y()) + "\n";
    gt += "# tau_ref " + evgp::format_double(sim.batch.t_start) + "\n";
    for (std::size_t i = 0; i < sim.scene.landmarks.size(); ++i)
        gt += "# landmark " + std::to_string(i) + " " +
              evgp::format_double(sim.scene.landmarks[i].x()) + " " +
              evgp::format_double(sim.scene.landmarks[i].y()) + "\n";
    for (std::size_t i = 0; i < sim.landmark_of.size(); ++i)
        gt += "# assoc " + std::to_string(i) + " " + std::to_string(sim.landmark_of[i]) + "\n";

    std::vector<double> sample_times;
    sample_times.push_back(sim.batch.t_start);
    const int grid = 100;
    for (int i = 0; i <= grid; ++i)
        sample_times.push_back(sim.t0 + cfg.sim.duration * i / grid);
    std::sort(sample_times.begin(), sample_times.end());
    sample_times.erase(std::unique(sample_times.begin(), sample_times.end()),
                       sample_times.end());
    for (double t : sample_times) {
        evgp::Se2Transform pose = sim.trajectory.pose(t - sim.t0);
        gt += evgp::format_double(t) + " " + evgp::format_double(pose.theta) + " " +
              evgp::format_double(pose.p.x()) + " " + evgp::format_double(pose.p.y()) + "\n";
    }
    evgp::atomic_write_file(gt_path, gt);
    std::cerr << "simulate: wrote " << sim.batch.events.size() << " events to " << out_path
              << " and ground truth to " << gt_path << "\n";
    return 0;
}

// -------------------------------------------------------------- compensate

int run_compensate(const CommonOpts& common, const std::string& events_path,
                   const std::string& seed_str, double t0, const std::string& out_path) {
    evgp::Config cfg = resolve_config(common);

    double sx = 0, sy = 0;
    {
        auto comma = seed_str.find(',');
        if (comma == std::string::npos)
            throw std::invalid_argument("--seed expects 'x,y', got '" + seed_str + "'");
        sx = evgp::parse_double(seed_str.substr(0, comma));
        sy = evgp::parse_double(seed_str.substr(comma + 1));
    }

    evgp::ParseStats stats;
    std::vector<evgp::Event> stream = evgp::parse_event_file(events_path, cfg.sensor, &stats);
    for (const auto& w : stats.warnings) std::cerr << "warning: " << w << "\n";

    evgp::CollectResult col = evgp::collect_batch(stream, {sx, sy}, t0, cfg.motion.batch_size,
                                                  cfg.sensor.patch_radius);
    if (col.batch.events.size() < 2)
        throw std::runtime_error("fewer than 2 events in the window around the seed");

    evgp::MotionCompResult res = evgp::compensate(col.batch, cfg.motion);

    std::vector<std::string> header = config_comment_lines(cfg);
    header.push_back("metrics lml_initial=" + evgp::format_double(res.lml_initial) +
                     " lml_final=" + evgp::format_double(res.lml_final) +
                     " iterations=" + std::to_string(res.iterations) +
                     " converged=" + std::to_string(res.converged ? 1 : 0) +
                     " n_events=" + std::to_string(col.batch.events.size()) +
                     " t_ref=" + evgp::format_double(col.batch.t_start));
    if (col.depleted) header.push_back("warning short batch (stream depleted)");

    std::vector<evgp::Event> out_events = col.batch.events;
    for (std::size_t i = 0; i < out_events.size(); ++i) {
        out_events[i].x = res.compensated[i].x();
        out_events[i].y = res.compensated[i].y();
    }
    evgp::write_event_file(out_path, out_events, header);
    std::cerr << "compensate: lml " << evgp::format_double(res.lml_initial) << " -> "
              << evgp::format_double(res.lml_final) << " in " << res.iterations
              << " iterations; wrote " << out_events.size() << " events to " << out_path << "\n";
    return 0;
}

// ------------------------------------------------------------------- track

int run_track(const CommonOpts& common, const std::string& events_path,
              const std::string& seeds_path, const std::string& out_dir) {
    evgp::Config cfg = resolve_config(common);
    evgp::TrackerConfig tcfg = cfg.tracker_config();

    evgp::ParseStats stats;
    std::vector<evgp::Event> stream = evgp::parse_event_file(events_path, cfg.sensor, &stats);
    for (const auto& w : stats.warnings) std::cerr << "warning: " << w << "\n";

    struct SeedSpec {
        double x, y, t;
    };
    std::vector<SeedSpec> seeds;
    {
        std::ifstream in(seeds_path);
        if (!in) throw std::runtime_error("cannot open seeds file: " + seeds_path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto fields = evgp::detail::split_fields(line);
            if (fields.empty() || fields[0][0] == '#') continue;
            if (fields.size() != 3)
                throw std::runtime_error("seeds file line " + std::to_string(line_no) +
                                         ": expected 'x y t'");
            seeds.push_back({evgp::parse_double(fields[0]), evgp::parse_double(fields[1]),
                             evgp::parse_double(fields[2])});
        }
    }

    fs::create_directories(out_dir);
    evgp::atomic_write_file(fs::path(out_dir) / "config.txt", evgp::dump_config(cfg));

    std::vector<evgp::Track> tracks(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            tracks[i] = evgp::track_pattern(stream, {seeds[i].x, seeds[i].y}, seeds[i].t, tcfg,
                                            static_cast<int>(i));
        }
    };
    int n_threads = std::min<int>(effective_threads(common), static_cast<int>(seeds.size()));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (std::size_t i = 0; i < tracks.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "track_%03zu.txt", i);
        evgp::atomic_write_file(fs::path(out_dir) / name, evgp::format_track(tracks[i]));
    }
    std::cerr << "track: wrote " << tracks.size() << " track files to " << out_dir << "\n";
    return 0;
}

// -------------------------------------------------------------------- eval

struct GtData {
    evgp::Vec2 seed;
    std::vector<evgp::Vec2> landmarks;
    std::map<std::size_t, int> assoc;  // event file index -> landmark
    std::vector<std::array<double, 4>> pose_rows;  // t theta px py
};

GtData parse_gt_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open ground-truth file: " + path);
    GtData gt;
    std::string line;
    while (std::getline(in, line)) {
        auto fields = evgp::detail::split_fields(line);
        if (fields.empty()) continue;
        if (fields[0][0] == '#') {
            if (fields.size() >= 2 && fields[1] == "seed" && fields.size() == 4) {
                gt.seed = {evgp::parse_double(fields[2]), evgp::parse_double(fields[3])};
            } else if (fields.size() == 5 && fields[1] == "landmark") {
                auto idx = static_cast<std::size_t>(evgp::parse_double(fields[2]));
                if (gt.landmarks.size() <= idx) gt.landmarks.resize(idx + 1);
                gt.landmarks[idx] = {evgp::parse_double(fields[3]),
                                     evgp::parse_double(fields[4])};
            } else if (fields.size() == 4 && fields[1] == "assoc") {
                gt.assoc[static_cast<std::size_t>(evgp::parse_double(fields[2]))] =
                    static_cast<int>(evgp::parse_double(fields[3]));
            }
            continue;
        }
        if (fields.size() != 4) throw std::runtime_error("malformed ground-truth row");
        gt.pose_rows.push_back({evgp::parse_double(fields[0]), evgp::parse_double(fields[1]),
                                evgp::parse_double(fields[2]), evgp::parse_double(fields[3])});
    }
    return gt;
}

// Events in the file regardless of sensor bounds (compensated events may sit
// slightly outside the sensor).
std::vector<evgp::Event> parse_events_unbounded(const std::string& path) {
    evgp::SensorGeometry huge;
    huge.width = 1 << 24;
    huge.height = 1 << 24;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<evgp::Event> events;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto fields = evgp::detail::split_fields(line);
        if (fields.empty() || fields[0][0] == '#') continue;
        if (fields.size() != 4)
            throw evgp::ParseError(path + ":" + std::to_string(line_no) + ": expected 4 fields");
        events.push_back(evgp::Event{
            evgp::parse_double(fields[0]), evgp::parse_double(fields[1]),
            evgp::parse_double(fields[2]), static_cast<int>(evgp::parse_double(fields[3]))});
    }
    return events;
}

std::map<std::string, std::string> parse_metrics_line(const std::string& path) {
    std::ifstream in(path);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto fields = evgp::detail::split_fields(line);
        if (fields.size() >= 2 && fields[0] == "#" && fields[1] == "metrics") {
            for (std::size_t i = 2; i < fields.size(); ++i) {
                auto eq = fields[i].find('=');
                if (eq != std::string_view::npos)
                    out[std::string(fields[i].substr(0, eq))] =
                        std::string(fields[i].substr(eq + 1));
            }
        }
    }
    return out;
}

int run_eval(const CommonOpts& common, const std::string& compensated_path,
             const std::string& events_path, const std::string& gt_path,
             const std::string& report_path, bool with_timing) {
    evgp::Config cfg = resolve_config(common);
    auto t_begin = std::chrono::steady_clock::now();

    std::vector<evgp::Event> compensated = parse_events_unbounded(compensated_path);
    if (compensated.empty()) throw std::runtime_error("no compensated events in " + compensated_path);
    std::vector<evgp::Event> original = parse_events_unbounded(events_path);
    GtData gt = parse_gt_file(gt_path);

    // Match compensated events to original file indices by timestamp, in order.
    std::multimap<double, std::size_t> by_time;
    for (std::size_t i = 0; i < original.size(); ++i) by_time.emplace(original[i].t, i);

    const double tau_ref = compensated.front().t;
    const std::array<double, 4>* ref_row = nullptr;
    for (const auto& row : gt.pose_rows)
        if (row[0] == tau_ref) ref_row = &row;
    if (!ref_row) {
        double best = 1e-9;
        for (const auto& row : gt.pose_rows)
            if (std::abs(row[0] - tau_ref) < best) {
                best = std::abs(row[0] - tau_ref);
                ref_row = &row;
            }
    }
    if (!ref_row)
        throw std::runtime_error("ground-truth file has no pose sample at the reference time");
    evgp::Se2Transform ref_pose{(*ref_row)[1], evgp::Vec2((*ref_row)[2], (*ref_row)[3])};

    double acc = 0.0;
    std::size_t matched = 0;
    for (const auto& ce : compensated) {
        auto it = by_time.find(ce.t);
        if (it == by_time.end())
            throw std::runtime_error("compensated event timestamp not found in original events");
        std::size_t src = it->second;
        by_time.erase(it);
        auto a = gt.assoc.find(src);
        if (a == gt.assoc.end()) throw std::runtime_error("missing ground-truth association");
        evgp::Vec2 target =
            ref_pose.apply(gt.landmarks[static_cast<std::size_t>(a->second)]) + gt.seed;
        acc += (evgp::Vec2(ce.x, ce.y) - target).squaredNorm();
        ++matched;
    }
    double rmse = std::sqrt(acc / static_cast<double>(matched));

    json report;
    report["config"] = config_json(cfg);
    report["gate"] = cfg.eval.gate;
    report["n_events"] = matched;
    report["rmse"] = rmse;
    report["success"] = rmse < cfg.eval.gate;
    auto metrics = parse_metrics_line(compensated_path);
    if (!metrics.empty()) {
        json m;
        for (const auto& [k, v] : metrics) m[k] = v;
        report["metrics"] = m;
    }
    if (with_timing)
        report["timing_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();

    evgp::atomic_write_file(report_path, report.dump(2) + "\n");
    std::cerr << "eval: rmse " << evgp::format_double(rmse) << " px over " << matched
              << " events -> " << report_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Event-camera SE(2) motion compensation and pattern tracking"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonOpts sim_common, comp_common, track_common, eval_common;

    auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic event batch or stream");
    add_common(sim_cmd, sim_common);
    std::string sim_out, sim_gt, sim_scene, sim_motion;
    std::optional<std::uint64_t> sim_seed;
    std::optional<std::size_t> sim_count;
    std::optional<double> sim_duration;
    sim_cmd->add_option("--out", sim_out, "output event file")->required();
    sim_cmd->add_option("--gt", sim_gt, "output ground-truth file")->required();
    sim_cmd->add_option("--scene", sim_scene, "scene kind: tags|rocks");
    sim_cmd->add_option("--motion", sim_motion, "motion kind: translation|se2");
    sim_cmd->add_option("--seed", sim_seed, "master rng seed");
    sim_cmd->add_option("--count", sim_count, "number of events");
    sim_cmd->add_option("--duration", sim_duration, "span in seconds");

    auto* comp_cmd = app.add_subcommand("compensate", "SE(2)-motion-compensate one event batch");
    add_common(comp_cmd, comp_common);
    std::string comp_events, comp_seed, comp_out;
    double comp_t0 = 0.0;
    comp_cmd->add_option("--events", comp_events, "input event file")->required();
    comp_cmd->add_option("--seed", comp_seed, "seed position 'x,y'")->required();
    comp_cmd->add_option("--t0", comp_t0, "batch start time, seconds")->required();
    comp_cmd->add_option("--out", comp_out, "output compensated event file")->required();

    auto* track_cmd = app.add_subcommand("track", "track patterns from seed positions");
    add_common(track_cmd, track_common);
    std::string track_events, track_seeds, track_out;
    track_cmd->add_option("--events", track_events, "input event file")->required();
    track_cmd->add_option("--seeds", track_seeds, "file of 'x y t' seed lines")->required();
    track_cmd->add_option("--out", track_out, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "score compensated events against ground truth");
    add_common(eval_cmd, eval_common);
    std::string eval_comp, eval_events, eval_gt, eval_report;
    bool eval_timing = false;
    eval_cmd->add_option("--compensated", eval_comp, "compensated event file")->required();
    eval_cmd->add_option("--events", eval_events, "original event file")->required();
    eval_cmd->add_option("--gt", eval_gt, "ground-truth file from simulate")->required();
    eval_cmd->add_option("--report", eval_report, "output JSON report")->required();
    eval_cmd->add_flag("--timing", eval_timing, "include wall-clock timing in the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help() << "\n";
        return 2;
    }

    try {
        if (sim_cmd->parsed()) {
            if (!sim_scene.empty()) sim_common.overrides.push_back("sim.scene=" + sim_scene);
            if (!sim_motion.empty()) sim_common.overrides.push_back("sim.motion=" + sim_motion);
            if (sim_seed) sim_common.overrides.push_back("sim.seed=" + std::to_string(*sim_seed));
            if (sim_count)
                sim_common.overrides.push_back("sim.count=" + std::to_string(*sim_count));
            if (sim_duration)
                sim_common.overrides.push_back("sim.duration=" +
                                               evgp::format_double(*sim_duration));
            return run_simulate(sim_common, sim_out, sim_gt);
        }
        if (comp_cmd->parsed())
            return run_compensate(comp_common, comp_events, comp_seed, comp_t0, comp_out);
        if (track_cmd->parsed()) return run_track(track_common, track_events, track_seeds, track_out);
        if (eval_cmd->parsed())
            return run_eval(eval_common, eval_comp, eval_events, eval_gt, eval_report, eval_timing);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
