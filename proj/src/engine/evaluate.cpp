#include "fsv/engine/evaluate.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

namespace fsv::engine {

std::size_t default_workers() {
    if (const char* env = std::getenv("FSE_WORKERS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = default_workers();
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                next = count;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

EvalReport EvalReport::from_accuracies(std::vector<double> accuracies) {
    EvalReport r;
    r.episodes = accuracies.size();
    r.accuracies = std::move(accuracies);
    if (r.episodes == 0) return r;
    double sum = 0.0;
    for (double a : r.accuracies) sum += a;
    r.mean = sum / static_cast<double>(r.episodes);
    if (r.episodes > 1) {
        double ss = 0.0;
        for (double a : r.accuracies) ss += (a - r.mean) * (a - r.mean);
        const double s = std::sqrt(ss / static_cast<double>(r.episodes - 1));
        r.halfwidth = 1.96 * s / std::sqrt(static_cast<double>(r.episodes));
    }
    return r;
}

std::string EvalReport::format() const {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.1f ± %.2f", 100.0 * mean, 100.0 * halfwidth);
    return buf;
}

std::string EvalReport::csv() const {
    std::ostringstream os;
    os << "episode,accuracy\n";
    char buf[64];
    for (std::size_t i = 0; i < accuracies.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i, accuracies[i]);
        os << buf;
    }
    std::snprintf(buf, sizeof buf, "mean,%.17g\nhalfwidth,%.17g\n", mean, halfwidth);
    os << buf;
    return os.str();
}

EvalReport evaluate_with(const ClassMap& split, const EpisodeSpec& spec, std::size_t count, std::uint64_t seed,
                         const EpisodeScorer& scorer, std::size_t workers) {
    const auto episodes = sample_episodes(split, spec, count, seed);
    std::vector<double> acc(count);
    parallel_for(count, workers, [&](std::size_t i) { acc[i] = scorer(episodes[i], i); });
    return EvalReport::from_accuracies(std::move(acc));
}

EvalReport evaluate(const Model& model, const ClassMap& split, const FeatureSource& source, const EpisodeSpec& spec,
                    std::size_t count, std::uint64_t seed, std::size_t workers) {
    const auto episodes = sample_episodes(split, spec, count, seed);
    std::set<std::string> unique;
    for (const auto& ep : episodes) {
        for (const auto& s : ep.support) unique.insert(s.ref);
        for (const auto& q : ep.query) unique.insert(q.ref);
    }
    const std::vector<std::string> refs(unique.begin(), unique.end());
    std::vector<embed::VideoEmbedding> embedded(refs.size());
    parallel_for(refs.size(), workers, [&](std::size_t i) {
        embedded[i] = embed_videos(model, {load_video(model, source, refs[i])})[0];
    });
    std::unordered_map<std::string, const embed::VideoEmbedding*> by_ref;
    for (std::size_t i = 0; i < refs.size(); ++i) by_ref[refs[i]] = &embedded[i];

    std::vector<double> acc(count);
    parallel_for(count, workers, [&](std::size_t i) {
        const auto& ep = episodes[i];
        std::vector<embed::VideoEmbedding> support, query;
        for (const auto& s : ep.support) support.push_back(*by_ref.at(s.ref));
        for (const auto& q : ep.query) query.push_back(*by_ref.at(q.ref));
        acc[i] = score_episode(model, ep, support, query).accuracy;
    });
    return EvalReport::from_accuracies(std::move(acc));
}

}  // namespace fsv::engine
