#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "evgp/common.hpp"
#include "evgp/event.hpp"
#include "evgp/homography.hpp"
#include "evgp/motion_comp.hpp"
#include "evgp/sim.hpp"
#include "evgp/tracker.hpp"

namespace evgp {

struct EvalConfig {
    double gate = 7.0;  // px success gate on reprojection RMSE
    int runs = 20;
};

/// Full CLI configuration: flat `section.key = value` entries over the module
/// configs. Unknown keys are rejected; values are validated at load.
struct Config {
    SensorGeometry sensor;
    MotionCompConfig motion;
    RegistrationOptions registration;
    SqExpKernel field_kernel{1.0, 0.25};
    double field_noise = 1e-2;
    std::size_t field_max_support = 1000;
    double field_floor = 1e-12;
    double tracker_divergence_threshold = 3.0;
    double tracker_border_margin = 17.0;  // patch_radius + 2
    int tracker_template_threshold = 2;
    double tracker_template_margin = 6.0;
    RegistrationMode tracker_mode = RegistrationMode::full;
    bool tracker_warm_start = true;
    SimConfig sim;
    EvalConfig eval;

    TrackerConfig tracker_config() const {
        TrackerConfig t;
        t.sensor = sensor;
        t.motion = motion;
        t.registration = registration;
        t.field_kernel = field_kernel;
        t.field_noise = field_noise;
        t.field_max_support = field_max_support;
        t.field_floor = field_floor;
        t.divergence_threshold = tracker_divergence_threshold;
        t.border_margin = tracker_border_margin;
        t.template_threshold = tracker_template_threshold;
        t.template_margin = tracker_template_margin;
        t.mode = tracker_mode;
        t.warm_start = tracker_warm_start;
        return t;
    }
};

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

struct ConfigEntry {
    std::string key;
    std::function<std::string(const Config&)> get;
    std::function<void(Config&, const std::string&)> set;
};

inline long long parse_int_value(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing characters");
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid integer '" + v + "'");
    }
}

inline double parse_double_value(const std::string& key, const std::string& v) {
    try {
        return parse_double(v);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid number '" + v + "'");
    }
}

inline const std::vector<ConfigEntry>& config_table() {
    static const std::vector<ConfigEntry> table = [] {
        std::vector<ConfigEntry> t;
        auto dbl = [&t](const std::string& key, std::function<double&(Config&)> ref) {
            t.push_back(ConfigEntry{
                key,
                [ref](const Config& c) { return format_double(ref(const_cast<Config&>(c))); },
                [key, ref](Config& c, const std::string& v) {
                    ref(c) = parse_double_value(key, v);
                }});
        };
        auto integer = [&t](const std::string& key, std::function<long long(const Config&)> get,
                            std::function<void(Config&, long long)> set) {
            t.push_back(ConfigEntry{
                key, [get](const Config& c) { return std::to_string(get(c)); },
                [key, set](Config& c, const std::string& v) {
                    set(c, parse_int_value(key, v));
                }});
        };
        auto str = [&t](const std::string& key, std::function<std::string(const Config&)> get,
                        std::function<void(Config&, const std::string&)> set) {
            t.push_back(ConfigEntry{key, std::move(get), std::move(set)});
        };

        integer("sensor.width", [](const Config& c) { return (long long)c.sensor.width; },
                [](Config& c, long long v) { c.sensor.width = (int)v; });
        integer("sensor.height", [](const Config& c) { return (long long)c.sensor.height; },
                [](Config& c, long long v) { c.sensor.height = (int)v; });
        dbl("sensor.patch_radius", [](Config& c) -> double& { return c.sensor.patch_radius; });

        integer("motion.batch_size", [](const Config& c) { return (long long)c.motion.batch_size; },
                [](Config& c, long long v) { c.motion.batch_size = (std::size_t)v; });
        integer("motion.optimize_size",
                [](const Config& c) { return (long long)c.motion.optimize_size; },
                [](Config& c, long long v) { c.motion.optimize_size = (std::size_t)v; });
        integer("motion.events_per_state",
                [](const Config& c) { return (long long)c.motion.events_per_state; },
                [](Config& c, long long v) { c.motion.events_per_state = (std::size_t)v; });
        dbl("motion.kf_scale", [](Config& c) -> double& { return c.motion.kf_scale; });
        dbl("motion.kf_lengthscale", [](Config& c) -> double& { return c.motion.kf_lengthscale; });
        dbl("motion.occupancy_noise",
            [](Config& c) -> double& { return c.motion.occupancy_noise; });
        dbl("motion.trajectory_noise",
            [](Config& c) -> double& { return c.motion.trajectory_noise; });
        dbl("motion.trajectory_lengthscale_factor",
            [](Config& c) -> double& { return c.motion.trajectory_lengthscale_factor; });
        integer("motion.max_iterations",
                [](const Config& c) { return (long long)c.motion.max_iterations; },
                [](Config& c, long long v) { c.motion.max_iterations = (int)v; });
        integer("motion.coarse_to_fine_stages",
                [](const Config& c) { return (long long)c.motion.coarse_to_fine_stages; },
                [](Config& c, long long v) { c.motion.coarse_to_fine_stages = (int)v; });
        dbl("motion.gradient_tolerance",
            [](Config& c) -> double& { return c.motion.gradient_tolerance; });
        dbl("motion.lml_improvement_min",
            [](Config& c) -> double& { return c.motion.lml_improvement_min; });

        dbl("registration.cauchy_scale",
            [](Config& c) -> double& { return c.registration.cauchy_scale; });
        integer("registration.max_iterations",
                [](const Config& c) { return (long long)c.registration.max_iterations; },
                [](Config& c, long long v) { c.registration.max_iterations = (int)v; });
        dbl("registration.lambda_init",
            [](Config& c) -> double& { return c.registration.lambda_init; });

        dbl("fields.scale", [](Config& c) -> double& { return c.field_kernel.scale; });
        dbl("fields.lengthscale", [](Config& c) -> double& { return c.field_kernel.lengthscale; });
        dbl("fields.noise", [](Config& c) -> double& { return c.field_noise; });
        integer("fields.max_support",
                [](const Config& c) { return (long long)c.field_max_support; },
                [](Config& c, long long v) { c.field_max_support = (std::size_t)v; });
        dbl("fields.floor", [](Config& c) -> double& { return c.field_floor; });

        dbl("tracker.divergence_threshold",
            [](Config& c) -> double& { return c.tracker_divergence_threshold; });
        dbl("tracker.border_margin", [](Config& c) -> double& { return c.tracker_border_margin; });
        integer("tracker.template_threshold",
                [](const Config& c) { return (long long)c.tracker_template_threshold; },
                [](Config& c, long long v) { c.tracker_template_threshold = (int)v; });
        dbl("tracker.template_margin",
            [](Config& c) -> double& { return c.tracker_template_margin; });
        str("tracker.registration_mode",
            [](const Config& c) { return std::string(to_string(c.tracker_mode)); },
            [](Config& c, const std::string& v) {
                if (v == "se2-only") c.tracker_mode = RegistrationMode::se2_only;
                else if (v == "batch-to-batch") c.tracker_mode = RegistrationMode::batch_to_batch;
                else if (v == "full") c.tracker_mode = RegistrationMode::full;
                else throw ConfigError("tracker.registration_mode must be se2-only, "
                                       "batch-to-batch or full (got '" + v + "')");
            });
        str("tracker.warm_start",
            [](const Config& c) { return c.tracker_warm_start ? "true" : "false"; },
            [](Config& c, const std::string& v) {
                if (v == "true") c.tracker_warm_start = true;
                else if (v == "false") c.tracker_warm_start = false;
                else throw ConfigError("tracker.warm_start must be true or false");
            });

        str("sim.scene", [](const Config& c) { return std::string(to_string(c.sim.scene)); },
            [](Config& c, const std::string& v) {
                if (v == "tags") c.sim.scene = SceneKind::tags;
                else if (v == "rocks") c.sim.scene = SceneKind::rocks;
                else throw ConfigError("sim.scene must be tags or rocks (got '" + v + "')");
            });
        str("sim.motion", [](const Config& c) { return std::string(to_string(c.sim.motion)); },
            [](Config& c, const std::string& v) {
                if (v == "translation") c.sim.motion = MotionKind::translation;
                else if (v == "se2") c.sim.motion = MotionKind::se2;
                else throw ConfigError("sim.motion must be translation or se2 (got '" + v + "')");
            });
        integer("sim.count", [](const Config& c) { return (long long)c.sim.count; },
                [](Config& c, long long v) { c.sim.count = (std::size_t)v; });
        dbl("sim.duration", [](Config& c) -> double& { return c.sim.duration; });
        dbl("sim.noise_sigma", [](Config& c) -> double& { return c.sim.noise_sigma; });
        dbl("sim.scene_extent", [](Config& c) -> double& { return c.sim.scene_extent; });
        dbl("sim.peak_theta", [](Config& c) -> double& { return c.sim.peak_theta; });
        dbl("sim.peak_trans", [](Config& c) -> double& { return c.sim.peak_trans; });
        dbl("sim.batch_duration", [](Config& c) -> double& { return c.sim.batch_duration; });
        integer("sim.rock_blobs", [](const Config& c) { return (long long)c.sim.rock_blobs; },
                [](Config& c, long long v) { c.sim.rock_blobs = (int)v; });
        integer("sim.seed", [](const Config& c) { return (long long)c.sim.master_seed; },
                [](Config& c, long long v) { c.sim.master_seed = (std::uint64_t)v; });
        dbl("sim.seed_x", [](Config& c) -> double& { return c.sim.seed_pos.x(); });
        dbl("sim.seed_y", [](Config& c) -> double& { return c.sim.seed_pos.y(); });

        dbl("eval.gate", [](Config& c) -> double& { return c.eval.gate; });
        integer("eval.runs", [](const Config& c) { return (long long)c.eval.runs; },
                [](Config& c, long long v) { c.eval.runs = (int)v; });

        std::sort(t.begin(), t.end(),
                  [](const ConfigEntry& a, const ConfigEntry& b) { return a.key < b.key; });
        return t;
    }();
    return table;
}

}  // namespace detail

inline void config_set(Config& cfg, const std::string& key, const std::string& value) {
    for (const auto& e : detail::config_table()) {
        if (e.key == key) {
            e.set(cfg, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

/// All keys and their current values, sorted by key.
inline std::vector<std::pair<std::string, std::string>> config_items(const Config& cfg) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : detail::config_table()) out.emplace_back(e.key, e.get(cfg));
    return out;
}

inline std::string dump_config(const Config& cfg) {
    std::string out;
    for (const auto& [k, v] : config_items(cfg)) out += k + " = " + v + "\n";
    return out;
}

inline void validate_config(const Config& cfg) {
    auto require = [](bool ok, const char* msg) {
        if (!ok) throw ConfigError(std::string("invalid config: ") + msg);
    };
    require(cfg.sensor.width > 0 && cfg.sensor.height > 0, "sensor dimensions must be positive");
    require(cfg.sensor.patch_radius > 0, "sensor.patch_radius must be positive");
    require(cfg.motion.batch_size >= 1, "motion.batch_size must be >= 1");
    require(cfg.motion.optimize_size >= 1 && cfg.motion.optimize_size <= cfg.motion.batch_size,
            "motion.optimize_size must be in [1, batch_size]");
    require(cfg.motion.events_per_state >= 1, "motion.events_per_state must be >= 1");
    require(cfg.motion.kf_scale > 0 && cfg.motion.kf_lengthscale > 0,
            "occupancy kernel hyperparameters must be positive");
    require(cfg.motion.occupancy_noise > 0, "motion.occupancy_noise must be positive");
    require(cfg.motion.trajectory_noise > 0, "motion.trajectory_noise must be positive");
    require(cfg.motion.trajectory_lengthscale_factor > 0,
            "motion.trajectory_lengthscale_factor must be positive");
    require(cfg.motion.max_iterations >= 1, "motion.max_iterations must be >= 1");
    require(cfg.motion.coarse_to_fine_stages >= 1 && cfg.motion.coarse_to_fine_stages <= 10,
            "motion.coarse_to_fine_stages must be in [1, 10]");
    require(cfg.motion.gradient_tolerance > 0, "motion.gradient_tolerance must be positive");
    require(cfg.motion.lml_improvement_min > 0, "motion.lml_improvement_min must be positive");
    require(cfg.registration.cauchy_scale > 0, "registration.cauchy_scale must be positive");
    require(cfg.registration.max_iterations >= 1, "registration.max_iterations must be >= 1");
    require(cfg.registration.lambda_init > 0, "registration.lambda_init must be positive");
    require(cfg.field_kernel.scale > 0 && cfg.field_kernel.lengthscale > 0,
            "field kernel hyperparameters must be positive");
    require(cfg.field_noise >= 0, "fields.noise must be non-negative");
    require(cfg.field_max_support >= 1, "fields.max_support must be >= 1");
    require(cfg.field_floor > 0, "fields.floor must be positive");
    require(cfg.tracker_divergence_threshold > 0,
            "tracker.divergence_threshold must be positive");
    require(cfg.tracker_border_margin > 0, "tracker.border_margin must be positive");
    require(cfg.tracker_template_threshold >= 1, "tracker.template_threshold must be >= 1");
    require(cfg.tracker_template_margin >= 0, "tracker.template_margin must be non-negative");
    require(cfg.sim.count >= 1, "sim.count must be >= 1");
    require(cfg.sim.duration > 0, "sim.duration must be positive");
    require(cfg.sim.noise_sigma >= 0, "sim.noise_sigma must be non-negative");
    require(cfg.sim.scene_extent > 0, "sim.scene_extent must be positive");
    require(cfg.sim.peak_theta >= 0 && cfg.sim.peak_trans >= 0,
            "sim peak magnitudes must be non-negative");
    require(cfg.sim.batch_duration > 0, "sim.batch_duration must be positive");
    require(cfg.sim.rock_blobs >= 1, "sim.rock_blobs must be >= 1");
    require(cfg.eval.gate >= 0, "eval.gate must be non-negative");
    require(cfg.eval.runs >= 1, "eval.runs must be >= 1");
}

/// Defaults overlaid with `section.key = value` lines from a file.
inline Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    Config cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view sv(line);
        auto hash = sv.find('#');
        if (hash != std::string_view::npos) sv = sv.substr(0, hash);
        auto trim = [](std::string_view s) {
            while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
                s.remove_prefix(1);
            while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
                s.remove_suffix(1);
            return s;
        };
        sv = trim(sv);
        if (sv.empty()) continue;
        auto eq = sv.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 'key = value'");
        std::string key(trim(sv.substr(0, eq)));
        std::string value(trim(sv.substr(eq + 1)));
        try {
            config_set(cfg, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    validate_config(cfg);
    return cfg;
}

}  // namespace evgp
