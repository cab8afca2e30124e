#include "fsv/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "fsv/error.hpp"

namespace fsv::cli {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* want) {
    throw ConfigError(std::string(key) + ": expected " + want + ", got '" + std::string(value) + "'");
}

std::uint64_t to_uint(std::string_view key, std::string_view v) {
    std::uint64_t out = 0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size()) bad(key, v, "a non-negative integer");
    return out;
}

std::size_t to_count(std::string_view key, std::string_view v) {
    const auto n = to_uint(key, v);
    if (n == 0) bad(key, v, "a positive integer");
    return n;
}

double to_real(std::string_view key, std::string_view v) {
    double out = 0.0;
    auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || end != v.data() + v.size() || !std::isfinite(out)) bad(key, v, "a number");
    return out;
}

double to_positive(std::string_view key, std::string_view v) {
    const double d = to_real(key, v);
    if (!(d > 0.0)) bad(key, v, "a positive number");
    return d;
}

std::vector<std::string_view> split_list(std::string_view v) {
    std::vector<std::string_view> out;
    while (true) {
        const auto comma = v.find(',');
        out.push_back(trim(v.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        v = v.substr(comma + 1);
    }
    return out;
}

std::array<float, 3> to_triple(std::string_view key, std::string_view v) {
    const auto parts = split_list(v);
    if (parts.size() != 3) bad(key, v, "three comma-separated numbers");
    std::array<float, 3> out{};
    for (int i = 0; i < 3; ++i) out[i] = static_cast<float>(to_real(key, parts[i]));
    return out;
}

std::string num(double d) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", d);
    return buf;
}

std::string triple(const std::array<float, 3>& t) {
    return num(t[0]) + "," + num(t[1]) + "," + num(t[2]);
}

struct Key {
    const char* name;
    std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
    std::function<std::string(const RunConfig&)> get;
};

using engine::to_string;

// Dump order follows this table.
const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        // episodes and optimisation
        {"way", [](RunConfig& c, auto k, auto v) { c.train.way = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.way); }},
        {"shot", [](RunConfig& c, auto k, auto v) { c.train.shot = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.shot); }},
        {"queries", [](RunConfig& c, auto k, auto v) { c.train.queries = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.queries); }},
        {"max_episodes", [](RunConfig& c, auto k, auto v) { c.train.max_episodes = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.max_episodes); }},
        {"val_every", [](RunConfig& c, auto k, auto v) { c.train.val_every = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.val_every); }},
        {"val_episodes", [](RunConfig& c, auto k, auto v) { c.train.val_episodes = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.val_episodes); }},
        {"patience", [](RunConfig& c, auto k, auto v) { c.train.patience = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.patience); }},
        {"lr", [](RunConfig& c, auto k, auto v) { c.train.lr = to_positive(k, v); },
         [](const RunConfig& c) { return num(c.train.lr); }},
        {"seed", [](RunConfig& c, auto k, auto v) { c.train.seed = to_uint(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        {"eval_episodes", [](RunConfig& c, auto k, auto v) { c.train.eval_episodes = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.eval_episodes); }},
        {"eval_queries", [](RunConfig& c, auto k, auto v) { c.train.eval_queries = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.eval_queries); }},
        // model
        {"streams", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::string(to_string(c.train.model.streams)); }},
        {"rgb_fps", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return to_string(c.train.model.rgb_fps); }},
        {"flow_fps", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return to_string(c.train.model.flow_fps); }},
        {"encoder", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::string(embed::to_string(c.train.model.encoder.mode)); }},
        {"flat_dim", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.model.encoder.flat_dim); }},
        {"spatial_channels", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.model.encoder.spatial_channels); }},
        {"aggregator", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::string(embed::to_string(c.train.model.aggregator.kind)); }},
        {"lstm_hidden", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.model.aggregator.lstm_hidden); }},
        {"conv3d_channels", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::to_string(c.train.model.aggregator.conv3d_channels); }},
        {"head", [](RunConfig& c, auto k, auto v) { engine::set_model_key(c.train.model, k, v); },
         [](const RunConfig& c) { return std::string(heads::to_string(c.train.model.head)); }},
        // preprocessing
        {"native_fps", [](RunConfig& c, auto k, auto v) { c.preproc.native_fps = to_positive(k, v); },
         [](const RunConfig& c) { return num(c.preproc.native_fps); }},
        {"target_fps", [](RunConfig& c, auto k, auto v) { c.preproc.target_fps = to_positive(k, v); },
         [](const RunConfig& c) { return num(c.preproc.target_fps); }},
        {"prepare_rates",
         [](RunConfig& c, auto, auto v) {
             c.prepare_rates.clear();
             for (auto part : split_list(v)) {
                 auto fps = engine::parse_fps(part);
                 if (fps.single_frame) throw ConfigError("prepare_rates: single frames are always prepared");
                 c.prepare_rates.push_back(fps);
             }
         },
         [](const RunConfig& c) {
             std::string s;
             for (const auto& r : c.prepare_rates) s += (s.empty() ? "" : ",") + to_string(r);
             return s;
         }},
        {"resize_to", [](RunConfig& c, auto k, auto v) { c.preproc.resize_to = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.preproc.resize_to); }},
        {"flow_clamp", [](RunConfig& c, auto k, auto v) { c.preproc.flow_clamp = to_positive(k, v); },
         [](const RunConfig& c) { return num(c.preproc.flow_clamp); }},
        {"min_frames", [](RunConfig& c, auto k, auto v) { c.preproc.min_frames = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.preproc.min_frames); }},
        {"rgb_mean", [](RunConfig& c, auto k, auto v) { c.preproc.rgb_mean = to_triple(k, v); },
         [](const RunConfig& c) { return triple(c.preproc.rgb_mean); }},
        {"rgb_std", [](RunConfig& c, auto k, auto v) { c.preproc.rgb_std = to_triple(k, v); },
         [](const RunConfig& c) { return triple(c.preproc.rgb_std); }},
        {"flow_mean", [](RunConfig& c, auto k, auto v) { c.preproc.flow_mean = to_triple(k, v); },
         [](const RunConfig& c) { return triple(c.preproc.flow_mean); }},
        {"flow_std", [](RunConfig& c, auto k, auto v) { c.preproc.flow_std = to_triple(k, v); },
         [](const RunConfig& c) { return triple(c.preproc.flow_std); }},
        {"fb_pyr_scale", [](RunConfig& c, auto k, auto v) { c.preproc.farneback.pyr_scale = to_positive(k, v); },
         [](const RunConfig& c) { return num(c.preproc.farneback.pyr_scale); }},
        {"fb_levels", [](RunConfig& c, auto k, auto v) { c.preproc.farneback.levels = static_cast<int>(to_count(k, v)); },
         [](const RunConfig& c) { return std::to_string(c.preproc.farneback.levels); }},
        {"fb_winsize", [](RunConfig& c, auto k, auto v) { c.preproc.farneback.winsize = static_cast<int>(to_count(k, v)); },
         [](const RunConfig& c) { return std::to_string(c.preproc.farneback.winsize); }},
        {"fb_iterations",
         [](RunConfig& c, auto k, auto v) { c.preproc.farneback.iterations = static_cast<int>(to_count(k, v)); },
         [](const RunConfig& c) { return std::to_string(c.preproc.farneback.iterations); }},
        {"fb_poly_n", [](RunConfig& c, auto k, auto v) { c.preproc.farneback.poly_n = static_cast<int>(to_count(k, v)); },
         [](const RunConfig& c) { return std::to_string(c.preproc.farneback.poly_n); }},
        {"fb_poly_sigma", [](RunConfig& c, auto k, auto v) { c.preproc.farneback.poly_sigma = to_positive(k, v); },
         [](const RunConfig& c) { return num(c.preproc.farneback.poly_sigma); }},
        // synthetic data
        {"synth_samples", [](RunConfig& c, auto k, auto v) { c.synth.samples_per_class = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.synth.samples_per_class); }},
        {"synth_frame_size", [](RunConfig& c, auto k, auto v) { c.synth.frame_size = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.synth.frame_size); }},
        {"synth_native_fps", [](RunConfig& c, auto k, auto v) { c.synth.native_fps = to_positive(k, v); },
         [](const RunConfig& c) { return num(c.synth.native_fps); }},
        {"synth_min_seconds", [](RunConfig& c, auto k, auto v) { c.synth.min_seconds = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.synth.min_seconds); }},
        {"synth_max_seconds", [](RunConfig& c, auto k, auto v) { c.synth.max_seconds = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.synth.max_seconds); }},
        {"synth_square", [](RunConfig& c, auto k, auto v) { c.synth.square_size = to_count(k, v); },
         [](const RunConfig& c) { return std::to_string(c.synth.square_size); }},
        {"synth_noise", [](RunConfig& c, auto k, auto v) { c.synth.noise = to_real(k, v); },
         [](const RunConfig& c) { return num(c.synth.noise); }},
        {"synth_jitter", [](RunConfig& c, auto k, auto v) { c.synth.jitter = to_real(k, v); },
         [](const RunConfig& c) { return num(c.synth.jitter); }},
        // paths and runtime
        {"manifest", [](RunConfig& c, auto, auto v) { c.manifest = std::string(v); },
         [](const RunConfig& c) { return c.manifest; }},
        {"frames_dir", [](RunConfig& c, auto, auto v) { c.frames_dir = std::string(v); },
         [](const RunConfig& c) { return c.frames_dir; }},
        {"features_dir", [](RunConfig& c, auto, auto v) { c.features_dir = std::string(v); },
         [](const RunConfig& c) { return c.features_dir; }},
        {"run_dir", [](RunConfig& c, auto, auto v) { c.run_dir = std::string(v); },
         [](const RunConfig& c) { return c.run_dir; }},
        {"eval_split",
         [](RunConfig& c, auto, auto v) {
             if (!engine::is_split_name(v)) throw ConfigError("eval_split: unknown split '" + std::string(v) + "'");
             c.eval_split = std::string(v);
         },
         [](const RunConfig& c) { return c.eval_split; }},
        {"workers", [](RunConfig& c, auto k, auto v) { c.workers = to_uint(k, v); },
         [](const RunConfig& c) { return std::to_string(c.workers); }},
    };
    return table;
}

bool is_path_key(std::string_view key) {
    return key == "manifest" || key == "frames_dir" || key == "features_dir" || key == "run_dir";
}

}  // namespace

void RunConfig::validate() const {
    train.validate();
    preproc.validate();
    synth.validate();
    if (prepare_rates.empty()) throw ConfigError("prepare_rates must list at least one rate");
}

void set_config_key(RunConfig& config, std::string_view key, std::string_view value) {
    for (const auto& k : keys()) {
        if (key == k.name) {
            k.set(config, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + std::string(key) + "'");
}

std::string dump_config(const RunConfig& config) {
    std::string out;
    for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(config) + "\n";
    return out;
}

RunConfig parse_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read config file " + path.string());
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
        if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));  // may be empty for path keys
        if (key.empty()) throw ConfigError(where + "expected 'key = value'");
        try {
            if (is_path_key(key) && !value.empty() && std::filesystem::path(value).is_relative()) {
                set_config_key(base, key, (path.parent_path() / value).lexically_normal().generic_string());
                continue;
            }
            set_config_key(base, key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return base;
}

}  // namespace fsv::cli
