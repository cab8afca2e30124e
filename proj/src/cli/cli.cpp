#include "fsv/cli/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <iostream>
#include <optional>
#include <random>

#include "fsv/cli/config.hpp"
#include "fsv/cli/manifest.hpp"
#include "fsv/cli/prepare.hpp"
#include "fsv/cli/synth.hpp"
#include "fsv/engine/ablation.hpp"
#include "fsv/engine/checkpoint.hpp"
#include "fsv/engine/train.hpp"
#include "fsv/error.hpp"

namespace fsv::cli {

namespace fs = std::filesystem;

namespace {

struct Flags {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::string> seed, way, shot, queries, episodes, aggregator, head, streams, rgb_fps, flow_fps,
        split, workers, manifest, features, run_dir, out, checkpoint, csv;
    bool resume = false;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "config file of key = value lines");
    cmd->add_option("--set", f.sets, "override one config key, KEY=VALUE (repeatable)");
    cmd->add_option("--seed", f.seed, "random seed");
    cmd->add_option("--way", f.way, "classes per episode");
    cmd->add_option("--shot", f.shot, "support examples per class");
    cmd->add_option("--queries", f.queries, "queries per class");
    cmd->add_option("--episodes", f.episodes, "training episodes (train, ablate) or evaluation episodes (eval)");
    cmd->add_option("--aggregator", f.aggregator, "mean, lstm, convlstm or conv3d");
    cmd->add_option("--head", f.head, "proto, matching or learned");
    cmd->add_option("--streams", f.streams, "rgb, flow or both");
    cmd->add_option("--rgb-fps", f.rgb_fps, "rgb frame rate or 'single'");
    cmd->add_option("--flow-fps", f.flow_fps, "flow frame rate or 'single'");
    cmd->add_option("--split", f.split, "dataset split name");
    cmd->add_option("--workers", f.workers, "worker threads (0: automatic)");
    cmd->add_option("--manifest", f.manifest, "manifest CSV");
    cmd->add_option("--features", f.features, "prepared feature directory");
    cmd->add_option("--run-dir", f.run_dir, "checkpoint and log directory");
}

RunConfig build_config(const std::string& command, const Flags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : parse_config(f.config);
    for (const auto& s : f.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects KEY=VALUE, got '" + s + "'");
        set_config_key(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    auto apply = [&](const char* key, const std::optional<std::string>& v) {
        if (v) set_config_key(cfg, key, *v);
    };
    apply("seed", f.seed);
    apply("way", f.way);
    apply("shot", f.shot);
    apply(command == "eval" ? "eval_queries" : "queries", f.queries);
    apply(command == "eval" ? "eval_episodes" : "max_episodes", f.episodes);
    apply("aggregator", f.aggregator);
    apply("head", f.head);
    apply("streams", f.streams);
    apply("rgb_fps", f.rgb_fps);
    apply("flow_fps", f.flow_fps);
    apply("eval_split", f.split);
    apply("workers", f.workers);
    apply("manifest", f.manifest);
    apply("features_dir", f.features);
    apply("run_dir", f.run_dir);
    cfg.validate();
    return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os) throw DataError("cannot write " + path.string());
}

int run_synth(RunConfig cfg, const Flags& f, std::ostream& out) {
    const fs::path dir = f.out.value_or("data");
    const auto records = synth_generate(cfg.synth, cfg.train.seed, dir, cfg.workers);
    // Companion config for the new data.
    // Relative paths in a config file resolve against its directory.
    cfg.manifest = "manifest.csv";
    cfg.features_dir = "features";
    cfg.run_dir = "run";
    cfg.frames_dir = "";
    cfg.preproc.native_fps = cfg.synth.native_fps;
    cfg.preproc.resize_to = cfg.synth.frame_size;
    cfg.preproc.flow_clamp = 4.0;
    // Desk-scale training: a narrow toy encoder, a larger step and short runs.
    cfg.train.model.encoder.mode = embed::EncoderMode::toy;
    cfg.train.model.encoder.spatial_channels = 32;
    cfg.train.model.encoder.flat_dim = 64;
    cfg.train.lr = 1e-3;
    cfg.train.max_episodes = 300;
    cfg.train.val_every = 50;
    cfg.train.val_episodes = 40;
    write_file(dir / "synth.conf", "# generated by synth\n" + dump_config(cfg));
    out << "wrote " << records.size() << " videos and " << (dir / "manifest.csv").generic_string() << "\n"
        << "config: " << (dir / "synth.conf").generic_string() << "\n";
    return kOk;
}

int run_prepare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    const auto records = read_manifest(cfg.manifest);
    const fs::path root = cfg.frames_dir.empty() ? fs::path(cfg.manifest).parent_path() : fs::path(cfg.frames_dir);
    PrepareOptions opts;
    opts.rates = cfg.prepare_rates;
    opts.seed = cfg.train.seed;
    opts.workers = cfg.workers;
    opts.log = &err;
    const auto report = prepare_dataset(records, root, cfg.preproc, cfg.features_dir, opts);
    out << "prepared " << report.prepared.size() << ", skipped " << report.skipped.size() << " (see "
        << (fs::path(cfg.features_dir) / "skipped.csv").generic_string() << ")\n";
    return kOk;
}

const std::string& probe_ref(const engine::DatasetSplit& data) {
    for (const auto& [cls, refs] : data.at("meta_train"))
        if (!refs.empty()) return refs.front();
    throw DataError("meta_train holds no prepared videos");
}

int run_train(RunConfig cfg, const Flags& f, std::ostream& out) {
    const auto data = load_dataset(cfg.manifest, cfg.features_dir);
    data.validate();
    engine::DirectoryFeatureSource source(cfg.features_dir);
    const fs::path run = cfg.run_dir;
    fs::create_directories(run);

    std::optional<engine::Checkpoint> resume;
    if (f.resume) {
        resume = engine::load_checkpoint(run / "last.fsck");
        cfg.train.model = engine::parse_model_dump(resume->model_config);
    }
    auto model = resume ? engine::model_from_checkpoint(*resume, false)
                        : engine::init_model(cfg.train.model, source, probe_ref(data), cfg.train.seed);
    std::ofstream log(run / "train_log.csv", resume ? std::ios::app : std::ios::trunc);
    if (!log) throw DataError("cannot write " + (run / "train_log.csv").string());
    engine::TrainOptions opts;
    opts.log = &log;
    opts.checkpoint_dir = run;
    opts.workers = cfg.workers;
    write_file(run / "config.txt", dump_config(cfg));
    const auto result = engine::train(std::move(model), data, source, cfg.train, opts, resume ? &*resume : nullptr);
    out << "trained " << result.episodes << " episodes" << (result.early_stopped ? " (early stop)" : "");
    if (result.state.best.val_accuracy >= 0)
        out << ", best validation accuracy " << result.state.best.val_accuracy * 100.0 << "% at episode "
            << result.state.best.episode;
    out << "\ncheckpoints: " << (run / "best.fsck").generic_string() << ", " << (run / "last.fsck").generic_string()
        << "\n";
    return kOk;
}

int run_eval(const RunConfig& cfg, const Flags& f, std::ostream& out, std::ostream& err) {
    const auto data = load_dataset(cfg.manifest, cfg.features_dir);
    engine::DirectoryFeatureSource source(cfg.features_dir);
    fs::path ckpt_path = f.checkpoint.value_or((fs::path(cfg.run_dir) / "best.fsck").string());
    // Runs without validation checks only leave last.fsck.
    if (!f.checkpoint && !fs::exists(ckpt_path)) ckpt_path = fs::path(cfg.run_dir) / "last.fsck";
    const auto model = engine::model_from_checkpoint(engine::load_checkpoint(ckpt_path));
    const auto report = engine::evaluate(model, data.at(cfg.eval_split), source, cfg.train.eval_spec(),
                                         cfg.train.eval_episodes, cfg.train.seed, cfg.workers);
    const fs::path csv = f.csv.value_or((fs::path(cfg.run_dir) / ("eval_" + cfg.eval_split + ".csv")).string());
    write_file(csv, report.csv());
    out << report.format() << "\n";
    err << cfg.eval_split << ", " << report.episodes << " episodes; per-episode results in " << csv.generic_string()
        << "\n";
    return kOk;
}

int run_ablate(const RunConfig& cfg, const Flags& f, std::ostream& out) {
    const auto data = load_dataset(cfg.manifest, cfg.features_dir);
    data.validate();
    engine::DirectoryFeatureSource source(cfg.features_dir);
    engine::AblationOptions opts;
    if (f.split) opts.eval_splits = {cfg.eval_split};
    opts.train.workers = cfg.workers;
    opts.progress = &out;
    const auto rows = engine::ablation_run(cfg.train, engine::stream_grid(), data, source, opts);
    const fs::path csv = f.csv.value_or((fs::path(cfg.run_dir) / "ablation.csv").string());
    write_file(csv, engine::ablation_csv(rows, opts.eval_splits));
    out << "\n" << engine::ablation_table(rows, opts.eval_splits);
    for (const auto& r : rows)
        if (!r.error.empty()) return kData;
    return kOk;
}

int run_episode(const RunConfig& cfg, std::ostream& out) {
    const auto data = load_dataset(cfg.manifest, cfg.features_dir);
    std::mt19937_64 rng(cfg.train.seed);
    const auto ep = engine::sample_episode(data.at(cfg.eval_split), cfg.train.train_spec(), rng);
    out << "role,ref,label,class\n";
    for (const auto& s : ep.support) out << "support," << s.ref << "," << s.label << "," << ep.classes[s.label] << "\n";
    for (const auto& s : ep.query) out << "query," << s.ref << "," << s.label << "," << ep.classes[s.label] << "\n";
    return kOk;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Few-shot two-stream video classification", args.empty() ? "fsv" : args.front()};
    app.require_subcommand(1);
    Flags flags;
    auto* synth = app.add_subcommand("synth", "generate the synthetic motion dataset");
    auto* prepare = app.add_subcommand("prepare", "sample frames, compute flow and write feature files");
    auto* train = app.add_subcommand("train", "episodic training with validation checkpoints");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint over sampled episodes");
    auto* ablate = app.add_subcommand("ablate", "train and evaluate the seven stream settings");
    auto* episode = app.add_subcommand("episode", "print one sampled episode");
    auto* config = app.add_subcommand("config", "print the effective configuration");
    for (auto* cmd : {synth, prepare, train, eval, ablate, episode, config}) add_common(cmd, flags);
    synth->add_option("--out", flags.out, "output directory (default: data)");
    train->add_flag("--resume", flags.resume, "continue from <run-dir>/last.fsck");
    eval->add_option("--checkpoint", flags.checkpoint, "checkpoint (default: <run-dir>/best.fsck, else last.fsck)");
    eval->add_option("--csv", flags.csv, "per-episode CSV (default: <run-dir>/eval_<split>.csv)");
    ablate->add_option("--csv", flags.csv, "results CSV (default: <run-dir>/ablation.csv)");

    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    auto* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    try {
        const auto cfg = build_config(name, flags);
        if (name == "synth") return run_synth(cfg, flags, out);
        if (name == "prepare") return run_prepare(cfg, out, err);
        if (name == "train") return run_train(cfg, flags, out);
        if (name == "eval") return run_eval(cfg, flags, out, err);
        if (name == "ablate") return run_ablate(cfg, flags, out);
        if (name == "episode") return run_episode(cfg, out);
        out << dump_config(cfg);
        return kOk;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kNumeric;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kData;
    }
}

void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

int cli_main(int argc, char** argv) { return cli_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

}  // namespace fsv::cli
