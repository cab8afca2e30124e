#include "fsv/engine/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "fsv/error.hpp"

namespace fsv::engine {

std::vector<AblationCell> stream_grid() {
    using flow::FpsChoice;
    const auto one = FpsChoice::at(1.0), two = FpsChoice::at(2.0), single = FpsChoice::single();
    return {
        {"RGB & Flow (1 fps)", Streams::both, one, one},
        {"RGB only (1 fps)", Streams::rgb, one, one},
        {"Flow only (1 fps)", Streams::flow, one, one},
        {"RGB & Flow (single frame)", Streams::both, single, single},
        {"RGB (1 fps) & Flow (2 fps)", Streams::both, one, two},
        {"RGB (2 fps) & Flow (1 fps)", Streams::both, two, one},
        {"RGB (2 fps) & Flow (2 fps)", Streams::both, two, two},
    };
}

namespace {

const std::string& first_ref(const ClassMap& split) {
    for (const auto& [cls, refs] : split)
        if (!refs.empty()) return refs.front();
    throw DataError("meta_train holds no samples");
}

}  // namespace

std::vector<AblationRow> ablation_run(const TrainConfig& base, const std::vector<AblationCell>& grid,
                                      const DatasetSplit& data, const FeatureSource& source,
                                      const AblationOptions& options) {
    std::vector<AblationRow> rows;
    for (const auto& cell : grid) {
        AblationRow row{cell, {}, 0, 0, {}};
        try {
            TrainConfig cfg = base;
            cfg.model.streams = cell.streams;
            cfg.model.rgb_fps = cell.rgb_fps;
            cfg.model.flow_fps = cell.flow_fps;
            cfg.validate();
            const auto& probe = first_ref(data.at("meta_train"));
            auto model = init_model(cfg.model, source, probe, cfg.seed);
            row.embedding_dim = embed_videos(model, {load_video(model, source, probe)})[0].data.numel();
            auto trained = train(std::move(model), data, source, cfg, options.train);
            row.episodes_trained = trained.episodes;
            for (const auto& split : options.eval_splits) {
                const auto& classes = data.at(split);
                if (classes.size() < cfg.way) continue;
                row.reports[split] = evaluate(trained.best, classes, source, cfg.eval_spec(), cfg.eval_episodes,
                                              cfg.seed + 1, options.train.workers);
            }
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        if (options.progress) {
            *options.progress << cell.label << ": ";
            if (!row.error.empty()) *options.progress << "failed (" << row.error << ")";
            for (const auto& [split, r] : row.reports) *options.progress << split << " " << r.format() << "  ";
            *options.progress << "\n";
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows, const std::vector<std::string>& splits) {
    std::size_t label_w = std::string("Setting").size();
    for (const auto& r : rows) label_w = std::max(label_w, r.cell.label.size());
    std::vector<std::size_t> col_w;
    for (const auto& s : splits) col_w.push_back(std::max<std::size_t>(s.size(), 14));

    std::ostringstream os;
    auto pad = [&](const std::string& s, std::size_t w) { os << s << std::string(w > s.size() ? w - s.size() : 0, ' '); };
    pad("Setting", label_w);
    for (std::size_t i = 0; i < splits.size(); ++i) {
        os << "  ";
        pad(splits[i], col_w[i]);
    }
    os << "\n";
    for (const auto& r : rows) {
        pad(r.cell.label, label_w);
        for (std::size_t i = 0; i < splits.size(); ++i) {
            os << "  ";
            auto it = r.reports.find(splits[i]);
            // "±" is two bytes but one column.
            std::string cell = !r.error.empty() ? "error" : it == r.reports.end() ? "-" : it->second.format();
            const std::size_t shown = cell.size() - (it != r.reports.end() && r.error.empty() ? 1 : 0);
            os << cell << std::string(col_w[i] > shown ? col_w[i] - shown : 0, ' ');
        }
        os << "\n";
    }
    return os.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows, const std::vector<std::string>& splits) {
    std::ostringstream os;
    os << "setting,streams,rgb_fps,flow_fps,embedding_dim,episodes_trained";
    for (const auto& s : splits) os << "," << s << "_mean," << s << "_halfwidth";
    os << ",error\n";
    char buf[64];
    for (const auto& r : rows) {
        os << '"' << r.cell.label << "\"," << to_string(r.cell.streams) << "," << to_string(r.cell.rgb_fps) << ","
           << to_string(r.cell.flow_fps) << "," << r.embedding_dim << "," << r.episodes_trained;
        for (const auto& s : splits) {
            auto it = r.reports.find(s);
            if (it == r.reports.end()) {
                os << ",,";
            } else {
                std::snprintf(buf, sizeof buf, ",%.6f,%.6f", it->second.mean, it->second.halfwidth);
                os << buf;
            }
        }
        std::string err = r.error;
        std::replace(err.begin(), err.end(), '"', '\'');
        os << ",\"" << err << "\"\n";
    }
    return os.str();
}

}  // namespace fsv::engine
