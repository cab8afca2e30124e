#include "fsv/cli/prepare.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <ostream>

#include "fsv/embed/fsvf.hpp"
#include "fsv/engine/evaluate.hpp"
#include "fsv/engine/model.hpp"
#include "fsv/error.hpp"
#include "fsv/flow/preprocess.hpp"

namespace fsv::cli {

namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Next header token, skipping whitespace and comments.
std::string pnm_token(std::istream& is) {
    std::string tok;
    int c;
    while ((c = is.get()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
        } else if (std::isspace(c)) {
            if (!tok.empty()) break;
        } else {
            tok += static_cast<char>(c);
        }
    }
    return tok;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        os << text;
        if (!os) throw DataError("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string csv_quote(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
    return out + "\"";
}

}  // namespace

flow::Frame read_pnm(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read " + path.string());
    const auto magic = pnm_token(is);
    if (magic != "P5" && magic != "P6") throw DataError(path.string() + ": not a binary PGM/PPM");
    std::size_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoul(pnm_token(is));
        h = std::stoul(pnm_token(is));
        maxval = std::stoul(pnm_token(is));
    } catch (const std::exception&) {
        throw DataError(path.string() + ": bad header");
    }
    if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) throw DataError(path.string() + ": bad header");
    const std::size_t channels = magic == "P6" ? 3 : 1, bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> raw(w * h * channels * bytes);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(is.gcount()) != raw.size()) throw DataError(path.string() + ": truncated pixels");
    flow::Frame f(h, w, channels);
    const float scale = 1.0f / static_cast<float>(maxval);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < channels; ++c) {
                const std::size_t i = ((y * w + x) * channels + c) * bytes;
                const unsigned v = bytes == 2 ? (raw[i] << 8 | raw[i + 1]) : raw[i];
                f.at(c, y, x) = std::min(1.0f, static_cast<float>(v) * scale);
            }
    return f;
}

void write_pnm(const fs::path& path, const flow::Frame& frame) {
    if (frame.channels != 1 && frame.channels != 3) throw DataError("PNM frames need 1 or 3 channels");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write " + path.string());
    os << (frame.channels == 3 ? "P6" : "P5") << "\n" << frame.width << " " << frame.height << "\n255\n";
    for (std::size_t y = 0; y < frame.height; ++y)
        for (std::size_t x = 0; x < frame.width; ++x)
            for (std::size_t c = 0; c < frame.channels; ++c)
                os.put(static_cast<char>(std::lround(std::clamp(frame.at(c, y, x), 0.0f, 1.0f) * 255.0f)));
    if (!os) throw DataError("write failed: " + path.string());
}

std::vector<flow::Frame> load_frames(const fs::path& path) {
    std::vector<flow::Frame> frames;
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path)) {
            const auto ext = e.path().extension().string();
            if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end(),
                  [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
        for (const auto& f : files) frames.push_back(read_pnm(f));
        for (const auto& f : frames)
            if (f.height != frames.front().height || f.width != frames.front().width ||
                f.channels != frames.front().channels)
                throw DataError(path.string() + ": frames differ in size");
        return frames;
    }
    if (!fs::exists(path)) throw DataError("missing frames " + path.string());
    const auto t = embed::read_fsvf(path);
    const auto& d = t.shape();
    if (d.size() != 4 || (d[1] != 1 && d[1] != 3)) throw DataError(path.string() + ": raw frames must be T x {1,3} x H x W");
    const std::size_t per = d[1] * d[2] * d[3];
    for (std::size_t i = 0; i < d[0]; ++i) {
        flow::Frame f(d[2], d[3], d[1]);
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(i * per), per, f.pixels.begin());
        frames.push_back(std::move(f));
    }
    return frames;
}

PrepareReport prepare_dataset(const std::vector<ManifestRecord>& records, const fs::path& frames_root,
                              const flow::PreprocConfig& config, const fs::path& out_dir,
                              const PrepareOptions& options) {
    config.validate();
    for (const auto& r : options.rates)
        if (r.single_frame) throw ConfigError("prepare rates must be fixed rates");
    fs::create_directories(out_dir);

    std::vector<std::string> errors(records.size());
    std::mutex log_mutex;
    engine::parallel_for(records.size(), options.workers, [&](std::size_t i) {
        const auto ref = video_ref(records[i]);
        try {
            auto frames = load_frames(frames_root / records[i].relative_path);
            // Gray input is replicated so every rgb file has three channels.
            for (auto& f : frames)
                if (f.channels == 1) {
                    flow::Frame rgb(f.height, f.width, 3);
                    for (std::size_t c = 0; c < 3; ++c)
                        std::copy(f.pixels.begin(), f.pixels.end(), rgb.pixels.begin() + c * f.pixels.size());
                    f = std::move(rgb);
                }
            const std::uint64_t seed = fnv1a(ref) ^ options.seed;
            auto choices = options.rates;
            choices.push_back(flow::FpsChoice::single());
            fs::create_directories(engine::feature_path(out_dir, ref, embed::Stream::rgb, choices[0]).parent_path());
            for (const auto& fps : choices) {
                auto cfg = config;
                cfg.rgb_fps = cfg.flow_fps = fps;
                const auto out = flow::prepare_video(frames, cfg, seed);
                embed::write_fsvf(engine::feature_path(out_dir, ref, embed::Stream::rgb, fps), out.rgb);
                embed::write_fsvf(engine::feature_path(out_dir, ref, embed::Stream::flow, fps), out.flow);
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
            if (options.log) {
                std::lock_guard lock(log_mutex);
                *options.log << "skip " << ref << ": " << e.what() << "\n";
            }
        }
    });

    PrepareReport report;
    std::string prepared = "ref\n", skipped = "ref,reason\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto ref = video_ref(records[i]);
        if (errors[i].empty()) {
            report.prepared.push_back(ref);
            prepared += ref + "\n";
        } else {
            report.skipped.emplace_back(ref, errors[i]);
            skipped += ref + "," + csv_quote(errors[i]) + "\n";
        }
    }
    write_text_atomic(out_dir / "prepared.csv", prepared);
    write_text_atomic(out_dir / "skipped.csv", skipped);
    return report;
}

}  // namespace fsv::cli
