#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "fsv/cli/cli.hpp"
#include "fsv/cli/config.hpp"
#include "fsv/cli/manifest.hpp"
#include "fsv/cli/prepare.hpp"
#include "fsv/cli/synth.hpp"
#include "fsv/embed/fsvf.hpp"
#include "fsv/engine/model.hpp"
#include "fsv/error.hpp"
#include "fsv/flow/farneback.hpp"
#include "fsv/flow/preprocess.hpp"

using namespace fsv;
using namespace fsv::cli;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fsv_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out, err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "fsv");
    std::ostringstream out, err;
    const int code = cli_main(args, out, err);
    return {code, out.str(), err.str()};
}

// Small dataset of flat precomputed features, written the way prepare
// lays out files. Class c of every split has features near c.
fs::path precomputed_dataset(const std::string& name, bool poison_train = false) {
    const auto dir = temp_dir(name);
    std::vector<ManifestRecord> records;
    const std::pair<const char*, int> splits[] = {{"meta_train", 6}, {"meta_val", 5}, {"meta_test_general", 5}};
    std::mt19937_64 rng(3);
    std::normal_distribution<float> noise(0.0f, 0.4f);
    std::string prepared = "ref\n";
    for (const auto& [split, classes] : splits) {
        for (int c = 0; c < classes; ++c) {
            const std::string cls = std::string(split) + "_c" + std::to_string(c);
            for (int s = 0; s < 16; ++s) {
                ManifestRecord r{"v/" + cls + "_" + std::to_string(s) + ".fsvf", cls, split};
                const auto ref = video_ref(r);
                for (auto fps : {flow::FpsChoice::at(1.0), flow::FpsChoice::at(2.0), flow::FpsChoice::single()}) {
                    const std::size_t T = fps.single_frame ? 1 : fps.rate == 1.0 ? 5 : 10;
                    for (auto stream : {embed::Stream::rgb, embed::Stream::flow}) {
                        dc::Tensor t({T, 4});
                        for (std::size_t i = 0; i < t.numel(); ++i)
                            t.mutable_data()[i] = (i % 4 == static_cast<std::size_t>(c % 4) ? 1.0f + c / 4 : 0.0f) +
                                                  noise(rng);
                        if (poison_train && std::string(split) == "meta_train") t.mutable_data()[0] = std::nanf("");
                        const auto path = engine::feature_path(dir / "features", ref, stream, fps);
                        fs::create_directories(path.parent_path());
                        embed::write_fsvf(path, t);
                    }
                }
                prepared += ref + "\n";
                records.push_back(r);
            }
        }
    }
    write_manifest(dir / "manifest.csv", records);
    write_text(dir / "features" / "prepared.csv", prepared);
    write_text(dir / "run.conf", "# precomputed toy features\n"
                                 "encoder = precomputed\nflat_dim = 4\naggregator = lstm\nlstm_hidden = 6\nlr = 0.01\nmax_episodes = 12\n"
                                 "val_every = 4\nval_episodes = 5\neval_episodes = 40\nworkers = 2\n"
                                 "manifest = " + (dir / "manifest.csv").string() + "\n" +
                                 "features_dir = " + (dir / "features").string() + "\n" +
                                 "run_dir = " + (dir / "run").string() + "\n");
    return dir;
}

}  // namespace

// ---------------------------------------------------------------- config

TEST(Config, ParsesKeyValueLinesWithComments) {
    const auto dir = temp_dir("cfg");
    write_text(dir / "a.conf", "# comment\nlr = 1e-5\n\n  way=10  # trailing\nhead = matching\nrgb_fps = single\n");
    const auto cfg = parse_config(dir / "a.conf");
    EXPECT_DOUBLE_EQ(cfg.train.lr, 1e-5);
    EXPECT_EQ(cfg.train.way, 10u);
    EXPECT_EQ(cfg.train.model.head, heads::HeadKind::matching);
    EXPECT_TRUE(cfg.train.model.rgb_fps.single_frame);
}

TEST(Config, MissingFileIsDataError) {
    EXPECT_THROW(parse_config("/nonexistent/fsv.conf"), DataError);
}

TEST(Config, RejectsMalformedUnknownAndMistyped) {
    const auto dir = temp_dir("cfg_bad");
    write_text(dir / "a.conf", "way 5\n");
    write_text(dir / "b.conf", "colour = red\n");
    write_text(dir / "c.conf", "way = five\n");
    write_text(dir / "d.conf", "lr = -1\n");
    write_text(dir / "e.conf", "eval_split = meta_nowhere\n");
    for (auto f : {"a.conf", "b.conf", "c.conf", "d.conf", "e.conf"}) EXPECT_THROW(parse_config(dir / f), ConfigError) << f;
    try {
        parse_config(dir / "b.conf");
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("b.conf:1"), std::string::npos);
    }
}

TEST(Config, DumpParsesBackToTheSameConfig) {
    RunConfig cfg;
    set_config_key(cfg, "aggregator", "conv3d");
    set_config_key(cfg, "head", "learned");
    set_config_key(cfg, "flow_fps", "2");
    set_config_key(cfg, "rgb_std", "0.1,0.2,0.3");
    set_config_key(cfg, "prepare_rates", "1,2,4");
    set_config_key(cfg, "synth_jitter", "0.5");
    const auto dir = temp_dir("cfg_dump");
    cfg.manifest = (dir / "m.csv").string();
    cfg.features_dir = (dir / "f").string();
    cfg.run_dir = (dir / "r").string();
    write_text(dir / "dump.conf", dump_config(cfg));
    EXPECT_EQ(dump_config(parse_config(dir / "dump.conf")), dump_config(cfg));
}

TEST(Config, RelativePathsResolveAgainstTheFile) {
    const auto dir = temp_dir("cfg_rel");
    write_text(dir / "sub" / "a.conf", "manifest = data/m.csv\nrun_dir = /abs/run\n");
    const auto cfg = parse_config(dir / "sub" / "a.conf");
    EXPECT_EQ(cfg.manifest, (dir / "sub" / "data" / "m.csv").generic_string());
    EXPECT_EQ(cfg.run_dir, "/abs/run");
}

TEST(Config, DefaultsMatchGolden) {
    EXPECT_EQ(dump_config(RunConfig{}), read_bytes(fs::path(FSV_GOLDEN_DIR) / "default_config.txt"));
}

TEST(Config, FlagOverridesFileValue) {
    const auto dir = temp_dir("cfg_flag");
    write_text(dir / "a.conf", "way = 10\n");
    const auto r = run({"config", "--config", (dir / "a.conf").string(), "--way", "5"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.out.find("way = 5\n"), std::string::npos);
    const auto file_only = run({"config", "--config", (dir / "a.conf").string()});
    EXPECT_NE(file_only.out.find("way = 10\n"), std::string::npos);
}

// ---------------------------------------------------------------- manifest

TEST(Manifest, ParsesAndGroups) {
    const auto recs = parse_manifest(
        "relative_path,class_name,split_name\n"
        "a/1.fsvf,walk,meta_train\r\n"
        "a/2.fsvf,walk,meta_train\n"
        "\"b/x,y.fsvf\",run,meta_val\n");
    ASSERT_EQ(recs.size(), 3u);
    EXPECT_EQ(recs[2].relative_path, "b/x,y.fsvf");
    EXPECT_EQ(video_ref(recs[0]), "a/1");
    const auto data = to_dataset(recs);
    EXPECT_EQ(data.at("meta_train").at("walk").size(), 2u);
    const std::set<std::string> keep{"a/2"};
    EXPECT_EQ(to_dataset(recs, &keep).at("meta_train").at("walk"), std::vector<std::string>{"a/2"});
    EXPECT_TRUE(to_dataset(recs, &keep).at("meta_val").empty());
}

TEST(Manifest, RejectsBadInput) {
    const std::string h = "relative_path,class_name,split_name\n";
    EXPECT_THROW(parse_manifest("a,b,meta_train\n"), DataError);
    EXPECT_THROW(parse_manifest(""), DataError);
    EXPECT_THROW(parse_manifest(h + "a,b\n"), DataError);
    EXPECT_THROW(parse_manifest(h + "a,b,meta_other\n"), DataError);
    EXPECT_THROW(parse_manifest(h + "a,b,meta_train\na,c,meta_train\n"), DataError);
    // Split disjointness.
    EXPECT_THROW(parse_manifest(h + "a,b,meta_train\nc,b,meta_val\n"), DataError);
}

TEST(Manifest, WriteReadRoundTrip) {
    const auto dir = temp_dir("manifest");
    const std::vector<ManifestRecord> recs{{"x/1.fsvf", "c1", "meta_train"}, {"x/\"q\",2.fsvf", "c2", "meta_val"}};
    write_manifest(dir / "m.csv", recs);
    EXPECT_EQ(read_manifest(dir / "m.csv"), recs);
    EXPECT_THROW(read_manifest(dir / "missing.csv"), DataError);
}

// ---------------------------------------------------------------- synth

TEST(Synth, ClassDesign) {
    const auto classes = synthetic_classes();
    ASSERT_EQ(classes.size(), 20u);
    EXPECT_EQ(classes.size() * SyntheticSpec{}.samples_per_class, 1200u);
    std::map<std::string, int> per_split;
    std::map<std::string, std::set<int>> textures;
    std::set<std::string> names;
    std::set<std::pair<int, int>> motions;
    int statics = 0;
    for (const auto& c : classes) {
        ++per_split[c.split];
        textures[c.split].insert(c.texture);
        names.insert(c.name);
        if (c.dx == 0 && c.dy == 0) ++statics;
        else motions.insert({c.dx, c.dy});
    }
    EXPECT_EQ(per_split["meta_train"], 10);
    EXPECT_EQ(per_split["meta_val"], 5);
    EXPECT_EQ(per_split["meta_test_general"], 5);
    EXPECT_EQ(statics, 4);
    EXPECT_EQ(motions.size(), 16u);
    EXPECT_EQ(names.size(), 20u);
    EXPECT_EQ(textures["meta_val"].size(), 1u);
    EXPECT_EQ(textures["meta_test_general"].size(), 1u);
    for (const auto& c : classes)
        if (c.dx || c.dy) {
            EXPECT_LE(std::max(std::abs(c.dx), std::abs(c.dy)), 2);
        }
}

TEST(Synth, VideoShapeRangeAndMotion) {
    SyntheticSpec spec;
    spec.noise = 0.0;
    spec.jitter = 0.0;
    const auto classes = synthetic_classes();
    for (const auto& cls : classes) {
        const auto frames = synth_video(spec, cls, 5, 11);
        EXPECT_GE(frames.size(), 20u);
        EXPECT_LE(frames.size(), 40u);
        EXPECT_EQ(frames.size() % 4, 0u);
        for (const auto& f : frames) {
            EXPECT_EQ(f.height, 32u);
            EXPECT_EQ(f.channels, 3u);
            EXPECT_NO_THROW(f.validate());
        }
        const bool moved = frames[0].pixels != frames[1].pixels;
        EXPECT_EQ(moved, cls.dx != 0 || cls.dy != 0) << cls.name;
    }
}

TEST(Synth, FlowRecoversClassMotion) {
    SyntheticSpec spec;
    spec.jitter = 0.0;
    for (const auto& cls : synthetic_classes()) {
        if (cls.name != "a_E2" && cls.name != "b_SW1" && cls.name != "c_N1") continue;
        const auto frames = synth_video(spec, cls, 1, 2);
        const auto f = flow::farneback_flow(flow::to_gray(frames[3]), flow::to_gray(frames[4]));
        // Mean over pixels where the flow is clearly non-zero.
        double su = 0, sv = 0;
        int n = 0;
        for (std::size_t y = 0; y < f.height; ++y)
            for (std::size_t x = 0; x < f.width; ++x)
                if (std::hypot(f.u(y, x), f.v(y, x)) > 0.5) {
                    su += f.u(y, x);
                    sv += f.v(y, x);
                    ++n;
                }
        ASSERT_GT(n, 20) << cls.name;
        EXPECT_NEAR(su / n, cls.dx, 0.5) << cls.name;
        EXPECT_NEAR(sv / n, cls.dy, 0.5) << cls.name;
    }
}

TEST(Synth, GenerateIsDeterministicAndInRange) {
    SyntheticSpec spec;
    spec.samples_per_class = 2;
    const auto a = temp_dir("synth_a"), b = temp_dir("synth_b"), c = temp_dir("synth_c");
    const auto recs = synth_generate(spec, 9, a, 2);
    synth_generate(spec, 9, b, 1);
    synth_generate(spec, 10, c);
    ASSERT_EQ(recs.size(), 40u);
    EXPECT_EQ(read_manifest(a / "manifest.csv"), recs);
    bool any_diff = false;
    for (const auto& r : recs) {
        const auto bytes = read_bytes(a / r.relative_path);
        EXPECT_EQ(bytes, read_bytes(b / r.relative_path));
        any_diff |= bytes != read_bytes(c / r.relative_path);
        const auto t = embed::read_fsvf(a / r.relative_path);
        EXPECT_EQ(t.ndim(), 4u);
        for (float v : t.data()) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
    }
    EXPECT_TRUE(any_diff);
}

// ---------------------------------------------------------------- prepare

TEST(Prepare, PnmRoundTripAndLexicographicOrder) {
    const auto dir = temp_dir("pnm");
    flow::Frame g(17, 19, 1), c(16, 16, 3);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<float>(i % 256) / 255.0f;
    for (std::size_t i = 0; i < c.pixels.size(); ++i) c.pixels[i] = static_cast<float>((i * 7) % 256) / 255.0f;
    write_pnm(dir / "g.pgm", g);
    write_pnm(dir / "c.ppm", c);
    const auto g2 = read_pnm(dir / "g.pgm"), c2 = read_pnm(dir / "c.ppm");
    for (std::size_t i = 0; i < g.pixels.size(); ++i) EXPECT_NEAR(g2.pixels[i], g.pixels[i], 1e-6);
    for (std::size_t i = 0; i < c.pixels.size(); ++i) EXPECT_NEAR(c2.pixels[i], c.pixels[i], 1e-6);
    write_text(dir / "bad.pgm", "P5\n4 4\n255\nxx");
    EXPECT_THROW(read_pnm(dir / "bad.pgm"), DataError);

    // "10" sorts before "2".
    const auto seq = dir / "seq";
    fs::create_directories(seq);
    for (int i : {2, 10, 1}) {
        flow::Frame f(16, 16, 1, static_cast<float>(i) / 20.0f);
        write_pnm(seq / (std::to_string(i) + ".pgm"), f);
    }
    const auto frames = load_frames(seq);
    ASSERT_EQ(frames.size(), 3u);
    EXPECT_NEAR(frames[0].pixels[0], 1 / 20.0f, 3e-3);
    EXPECT_NEAR(frames[1].pixels[0], 10 / 20.0f, 3e-3);
    EXPECT_NEAR(frames[2].pixels[0], 2 / 20.0f, 3e-3);
}

TEST(Prepare, TenSecondClipAtOneFpsGivesTenFrames) {
    const auto dir = temp_dir("prep_ten");
    for (int i = 0; i < 10; ++i) {
        flow::Frame f(48, 64, 3);
        for (std::size_t k = 0; k < f.pixels.size(); ++k) f.pixels[k] = static_cast<float>((k * 13 + i * 5) % 97) / 96.0f;
        char name[16];
        std::snprintf(name, sizeof name, "%04d.ppm", i);
        fs::create_directories(dir / "frames" / "clip");
        write_pnm(dir / "frames" / "clip" / name, f);
    }
    flow::PreprocConfig cfg;
    cfg.native_fps = 1.0;
    PrepareOptions opts;
    opts.rates = {flow::FpsChoice::at(1.0)};
    const auto report = prepare_dataset({{"clip", "c", "meta_train"}}, dir / "frames", cfg, dir / "out", opts);
    ASSERT_EQ(report.prepared.size(), 1u);
    const auto rgb = embed::read_fsvf(engine::feature_path(dir / "out", "clip", embed::Stream::rgb, flow::FpsChoice::at(1)));
    EXPECT_EQ(rgb.shape(), (dc::Shape{10, 3, 224, 224}));
}

TEST(Prepare, SkipsShortClipsKeepsOrderAndIsRepeatable) {
    const auto dir = temp_dir("prep");
    SyntheticSpec spec;
    spec.samples_per_class = 1;
    auto recs = synth_generate(spec, 4, dir / "raw");
    recs.resize(3);
    // A 3 s clip at 4 fps: three frames at 1 fps.
    {
        const auto frames = synth_video(spec, synthetic_classes()[0], 4, 99);
        std::vector<float> data;
        for (std::size_t i = 0; i < 12; ++i) data.insert(data.end(), frames[i].pixels.begin(), frames[i].pixels.end());
        embed::write_fsvf(dir / "raw" / "short.fsvf", dc::Tensor({12, 3, 32, 32}, std::move(data)));
        recs.push_back({"short.fsvf", "short", "meta_val"});
        recs.push_back({"missing.fsvf", "gone", "meta_val"});
    }
    flow::PreprocConfig cfg;
    cfg.native_fps = 4.0;
    cfg.resize_to = 32;
    std::ostringstream log;
    PrepareOptions opts;
    opts.log = &log;
    opts.workers = 2;
    const auto rep = prepare_dataset(recs, dir / "raw", cfg, dir / "feat", opts);
    EXPECT_EQ(rep.prepared.size(), 3u);
    ASSERT_EQ(rep.skipped.size(), 2u);
    EXPECT_EQ(rep.skipped[0].first, "short");
    const auto skip_log = read_bytes(dir / "feat" / "skipped.csv");
    EXPECT_NE(skip_log.find("short,"), std::string::npos);
    EXPECT_NE(skip_log.find("missing,"), std::string::npos);
    EXPECT_EQ(read_prepared(dir / "feat"), (std::set<std::string>(rep.prepared.begin(), rep.prepared.end())));

    // Frame order: rgb frame i is standardized native frame 4i.
    const auto ref = rep.prepared[0];
    const auto raw = load_frames(dir / "raw" / recs[0].relative_path);
    const auto rgb = embed::read_fsvf(engine::feature_path(dir / "feat", ref, embed::Stream::rgb, flow::FpsChoice::at(1)));
    ASSERT_EQ(rgb.dim(0), raw.size() / 4);
    for (std::size_t i = 0; i < rgb.dim(0); ++i) {
        const auto want = flow::standardize_rgb(raw[4 * i], cfg.rgb_mean, cfg.rgb_std);
        ASSERT_TRUE(std::equal(want.data().begin(), want.data().end(), rgb.data().begin() + i * want.numel()));
    }
    const auto flow2 = embed::read_fsvf(engine::feature_path(dir / "feat", ref, embed::Stream::flow, flow::FpsChoice::at(2)));
    EXPECT_EQ(flow2.dim(0), raw.size() / 2);
    const auto single = embed::read_fsvf(engine::feature_path(dir / "feat", ref, embed::Stream::rgb, flow::FpsChoice::single()));
    EXPECT_EQ(single.dim(0), 1u);

    // Rerun writes identical bytes.
    const auto before = read_bytes(engine::feature_path(dir / "feat", ref, embed::Stream::flow, flow::FpsChoice::at(1)));
    prepare_dataset(recs, dir / "raw", cfg, dir / "feat2", opts);
    EXPECT_EQ(read_bytes(engine::feature_path(dir / "feat2", ref, embed::Stream::flow, flow::FpsChoice::at(1))), before);
    EXPECT_EQ(read_bytes(dir / "feat2" / "prepared.csv"), read_bytes(dir / "feat" / "prepared.csv"));
}

TEST(Prepare, LoadDatasetFiltersByPrepared) {
    const auto dir = temp_dir("load");
    write_manifest(dir / "m.csv", {{"a/1.x", "c", "meta_train"}, {"a/2.x", "c", "meta_train"}});
    EXPECT_EQ(load_dataset(dir / "m.csv", dir / "feat").at("meta_train").at("c").size(), 2u);
    write_text(dir / "feat" / "prepared.csv", "ref\na/2\n");
    EXPECT_EQ(load_dataset(dir / "m.csv", dir / "feat").at("meta_train").at("c"), std::vector<std::string>{"a/2"});
}

// ---------------------------------------------------------------- cli_main

TEST(Cli, UsageErrors) {
    auto r = run({"train", "--bogus"});
    EXPECT_EQ(r.code, kUsage);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_EQ(run({}).code, kUsage);
    EXPECT_EQ(run({"dance"}).code, kUsage);
    EXPECT_EQ(run({"config", "--set", "noequals"}).code, kUsage);
    EXPECT_EQ(run({"config", "--aggregator", "gru"}).code, kUsage);
    EXPECT_EQ(run({"config", "--way", "0"}).code, kUsage);
    EXPECT_EQ(run({"--help"}).code, kOk);
}

TEST(Cli, LearnedHeadWithLstmIsAConfigError) {
    const auto r = run({"train", "--head", "learned", "--aggregator", "lstm"});
    EXPECT_EQ(r.code, kUsage);
    EXPECT_NE(r.err.find("configuration error"), std::string::npos);
}

TEST(Cli, MissingInputsAreDataErrors) {
    EXPECT_EQ(run({"config", "--config", "/nonexistent/x.conf"}).code, kData);
    EXPECT_EQ(run({"prepare", "--manifest", "/nonexistent/m.csv"}).code, kData);
    EXPECT_EQ(run({"eval", "--manifest", "/nonexistent/m.csv"}).code, kData);
}

TEST(Cli, TrainEvalEpisodeAndResume) {
    const auto dir = precomputed_dataset("flow");
    const auto conf = (dir / "run.conf").string();

    auto ep = run({"episode", "--config", conf, "--split", "meta_test_general", "--seed", "3"});
    ASSERT_EQ(ep.code, kOk) << ep.err;
    EXPECT_EQ(std::count(ep.out.begin(), ep.out.end(), '\n'), 1 + 5 * (5 + 5));

    auto tr = run({"train", "--config", conf});
    ASSERT_EQ(tr.code, kOk) << tr.err;
    EXPECT_TRUE(fs::exists(dir / "run" / "best.fsck"));
    const auto full_log = read_bytes(dir / "run" / "train_log.csv");

    auto e1 = run({"eval", "--config", conf, "--seed", "5", "--csv", (dir / "e1.csv").string()});
    auto e2 = run({"eval", "--config", conf, "--seed", "5", "--csv", (dir / "e2.csv").string()});
    ASSERT_EQ(e1.code, kOk) << e1.err;
    EXPECT_EQ(std::count(e1.out.begin(), e1.out.end(), '\n'), 1);
    EXPECT_NE(e1.out.find(" ± "), std::string::npos);
    EXPECT_EQ(e1.out, e2.out);
    EXPECT_EQ(read_bytes(dir / "e1.csv"), read_bytes(dir / "e2.csv"));
    EXPECT_EQ(std::count_if(e1.out.begin(), e1.out.end(), [](char c) { return c == '\n'; }), 1);

    // 6 episodes, then resume to 12: same log as the uninterrupted run.
    fs::remove_all(dir / "run");
    ASSERT_EQ(run({"train", "--config", conf, "--episodes", "6"}).code, kOk);
    const auto resumed = run({"train", "--config", conf, "--resume"});
    ASSERT_EQ(resumed.code, kOk) << resumed.err;
    EXPECT_EQ(read_bytes(dir / "run" / "train_log.csv"), full_log);
}

TEST(Cli, NonFiniteFeaturesExitWithNumericCode) {
    const auto dir = precomputed_dataset("nan", true);
    const auto r = run({"train", "--config", (dir / "run.conf").string()});
    EXPECT_EQ(r.code, kNumeric) << r.err;
}

TEST(Cli, SynthWritesDatasetAndCompanionConfig) {
    const auto dir = temp_dir("synth_cli");
    const auto r = run({"synth", "--out", (dir / "d").string(), "--set", "synth_samples=1"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_EQ(read_manifest(dir / "d" / "manifest.csv").size(), 20u);
    const auto cfg = parse_config(dir / "d" / "synth.conf");
    EXPECT_EQ(cfg.preproc.native_fps, 4.0);
    EXPECT_EQ(cfg.preproc.resize_to, 32u);
    EXPECT_EQ(cfg.train.max_episodes, 300u);
    EXPECT_EQ(cfg.manifest, (dir / "d" / "manifest.csv").lexically_normal().generic_string());
}
