#include "fsv/cli/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "fsv/embed/fsvf.hpp"
#include "fsv/engine/evaluate.hpp"
#include "fsv/error.hpp"

namespace fsv::cli {

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Square pattern: a 3x3 grid of random colours with fixed fine grain.
std::vector<float> make_texture(std::size_t side, int texture, std::uint64_t dataset_seed) {
    std::mt19937_64 rng(mix(dataset_seed ^ mix(0x7e57u + static_cast<std::uint64_t>(texture))));
    std::uniform_real_distribution<float> colour(0.05f, 0.95f), grain(-0.12f, 0.12f);
    std::array<std::array<float, 3>, 9> cells{};
    for (auto& c : cells)
        for (auto& v : c) v = colour(rng);
    std::vector<float> tex(3 * side * side);
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            const auto& cell = cells[(y * 3 / side) * 3 + x * 3 / side];
            const float g = grain(rng);
            for (std::size_t c = 0; c < 3; ++c)
                tex[(c * side + y) * side + x] = std::clamp(cell[c] + g, 0.0f, 1.0f);
        }
    return tex;
}

std::size_t wrap(long v, std::size_t n) {
    const long m = static_cast<long>(n);
    return static_cast<std::size_t>(((v % m) + m) % m);
}

}  // namespace

void SyntheticSpec::validate() const {
    if (samples_per_class == 0) throw ConfigError("synth_samples must be positive");
    if (frame_size < 16) throw ConfigError("synth_frame_size must be at least 16");
    if (!(native_fps > 0.0)) throw ConfigError("synth_native_fps must be positive");
    if (min_seconds == 0 || max_seconds < min_seconds) throw ConfigError("synth clip length range is empty");
    if (square_size == 0 || square_size >= frame_size) throw ConfigError("synth_square must be below the frame size");
    if (noise < 0.0) throw ConfigError("synth_noise must be non-negative");
    if (jitter < 0.0 || jitter > 1.0) throw ConfigError("synth_jitter must lie in [0, 1]");
}

std::vector<MotionClass> synthetic_classes() {
    struct Dir {
        const char* name;
        int dx, dy;
    };
    // y grows downwards, so north is -y.
    const Dir E{"E", 1, 0}, N{"N", 0, -1}, W{"W", -1, 0}, S{"S", 0, 1};
    const Dir NE{"NE", 1, -1}, NW{"NW", -1, -1}, SW{"SW", -1, 1}, SE{"SE", 1, 1};
    struct Group {
        int texture;
        const char* split;
        std::array<std::pair<Dir, int>, 4> moves;
    };
    const std::array<Group, 4> groups{{
        {0, "meta_test_general", {{{E, 2}, {N, 2}, {W, 1}, {S, 1}}}},
        {1, "meta_val", {{{NE, 2}, {NW, 2}, {SW, 1}, {SE, 1}}}},
        {2, "meta_train", {{{E, 1}, {N, 1}, {W, 2}, {S, 2}}}},
        {3, "meta_train", {{{NE, 1}, {NW, 1}, {SW, 2}, {SE, 2}}}},
    }};
    std::vector<MotionClass> out;
    for (const auto& g : groups) {
        const std::string tex(1, static_cast<char>('a' + g.texture));
        for (const auto& [d, speed] : g.moves)
            out.push_back({tex + "_" + d.name + std::to_string(speed), d.dx * speed, d.dy * speed, g.texture, g.split});
        out.push_back({tex + "_static", 0, 0, g.texture, g.split});
    }
    return out;
}

std::vector<flow::Frame> synth_video(const SyntheticSpec& spec, const MotionClass& cls, std::uint64_t dataset_seed,
                                     std::uint64_t video_seed) {
    spec.validate();
    const std::size_t H = spec.frame_size, W = spec.frame_size, Q = spec.square_size;
    const auto texture = make_texture(Q, cls.texture, dataset_seed);
    std::mt19937_64 rng(video_seed);

    const auto seconds = std::uniform_int_distribution<std::size_t>(spec.min_seconds, spec.max_seconds)(rng);
    const auto T = static_cast<std::size_t>(std::llround(static_cast<double>(seconds) * spec.native_fps));

    // Static low-frequency background.
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::array<double, 3> base{}, amp{};
    for (int c = 0; c < 3; ++c) {
        base[c] = 0.3 + 0.4 * unit(rng);
        amp[c] = 0.05 + 0.1 * unit(rng);
    }
    const double fx = 0.5 + 1.5 * unit(rng), fy = 0.5 + 1.5 * unit(rng);
    const double px = 2 * std::numbers::pi * unit(rng), py = 2 * std::numbers::pi * unit(rng);
    std::vector<float> background(3 * H * W);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double s = std::sin(2 * std::numbers::pi * fx * x / W + px + c) *
                                 std::cos(2 * std::numbers::pi * fy * y / H + py);
                background[(c * H + y) * W + x] = static_cast<float>(base[c] + amp[c] * s);
            }

    const long x0 = std::uniform_int_distribution<long>(0, static_cast<long>(W) - 1)(rng);
    const long y0 = std::uniform_int_distribution<long>(0, static_cast<long>(H) - 1)(rng);
    std::bernoulli_distribution jittered(spec.jitter);
    std::uniform_int_distribution<int> neighbour(0, 7);
    std::normal_distribution<double> noise(0.0, spec.noise);
    static constexpr int kOffsets[8][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}};

    std::vector<flow::Frame> frames;
    frames.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        long jx = 0, jy = 0;
        if (jittered(rng)) {
            const int k = neighbour(rng);
            jx = kOffsets[k][0];
            jy = kOffsets[k][1];
        }
        const long sx = x0 + cls.dx * static_cast<long>(t) + jx;
        const long sy = y0 + cls.dy * static_cast<long>(t) + jy;
        flow::Frame f(H, W, 3);
        f.pixels = background;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < Q; ++y)
                for (std::size_t x = 0; x < Q; ++x)
                    f.at(c, wrap(sy + static_cast<long>(y), H), wrap(sx + static_cast<long>(x), W)) =
                        texture[(c * Q + y) * Q + x];
        if (spec.noise > 0.0)
            for (auto& p : f.pixels) p = static_cast<float>(std::clamp(p + noise(rng), 0.0, 1.0));
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<ManifestRecord> synth_generate(const SyntheticSpec& spec, std::uint64_t seed,
                                           const std::filesystem::path& out_dir, std::size_t workers) {
    spec.validate();
    const auto classes = synthetic_classes();
    std::vector<ManifestRecord> records;
    for (const auto& cls : classes) {
        std::filesystem::create_directories(out_dir / "videos" / cls.name);
        for (std::size_t i = 0; i < spec.samples_per_class; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "_%03zu.fsvf", i);
            records.push_back({"videos/" + cls.name + "/" + cls.name + name, cls.name, cls.split});
        }
    }
    engine::parallel_for(records.size(), workers, [&](std::size_t idx) {
        const std::size_t c = idx / spec.samples_per_class, i = idx % spec.samples_per_class;
        const auto frames = synth_video(spec, classes[c], seed, mix(seed ^ mix(c * 100003 + i)));
        const std::size_t H = spec.frame_size, W = spec.frame_size;
        std::vector<float> data;
        data.reserve(frames.size() * 3 * H * W);
        for (const auto& f : frames) data.insert(data.end(), f.pixels.begin(), f.pixels.end());
        embed::write_fsvf(out_dir / records[idx].relative_path, dc::Tensor({frames.size(), 3, H, W}, std::move(data)));
    });
    write_manifest(out_dir / "manifest.csv", records);
    return records;
}

}  // namespace fsv::cli
