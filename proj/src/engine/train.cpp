#include "fsv/engine/train.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

#include "fsv/error.hpp"

namespace fsv::engine {

void TrainConfig::validate() const {
    model.validate();
    train_spec().validate();
    eval_spec().validate();
    if (max_episodes == 0 || val_every == 0 || val_episodes == 0 || patience == 0 || eval_episodes == 0)
        throw ConfigError("episode counts, val_every and patience must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
}

std::string format_loss(float value) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ec == std::errc() ? end : buf);
}

Model model_from_checkpoint(const Checkpoint& ckpt, bool prefer_best) {
    Model m{parse_model_dump(ckpt.model_config), {}};
    m.config.validate();
    const auto& src = prefer_best && ckpt.best.params.size() > 0 ? ckpt.best.params : ckpt.params;
    for (const auto& [name, t] : src) m.params.add(name, t.clone());
    return m;
}

namespace {

void check_gradients(const dc::Parameters& params) {
    for (const auto& [name, t] : params)
        for (float g : t.grad())
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + name);
}

dc::Parameters copy_params(const dc::Parameters& p) {
    dc::Parameters out;
    for (const auto& [name, t] : p) out.add(name, t.clone());
    return out;
}

}  // namespace

TrainResult train(Model model, const DatasetSplit& data, const FeatureSource& source, const TrainConfig& config,
                  const TrainOptions& options, const Checkpoint* resume) {
    config.validate();
    if (model.config.dump() != config.model.dump()) throw ConfigError("model does not match the training config");
    if (model.params.size() == 0)
        throw ConfigError("nothing to train: precomputed features with mean pooling and a distance head");
    const auto& train_split = data.at("meta_train");
    const auto& val_split = data.at("meta_val");

    Checkpoint state;
    state.model_config = config.model.dump();
    std::mt19937_64 rng(config.seed);
    if (resume) {
        if (resume->model_config != state.model_config) throw ConfigError("checkpoint was written for another model");
        model.params.assign_from(resume->params);
        state.adam = resume->adam;
        state.episode = resume->episode;
        rng = rng_from_string(resume->rng_state);
        state.best.val_accuracy = resume->best.val_accuracy;
        state.best.episode = resume->best.episode;
        state.best.stale_checks = resume->best.stale_checks;
        state.best.params = copy_params(resume->best.params);
    }

    // Every check draws the same validation episodes; an unusable meta_val disables checks.
    const std::uint64_t val_seed = config.seed ^ 0x9e3779b97f4a7c15ULL;
    bool can_validate = !val_split.empty();
    try {
        if (can_validate) sample_episodes(val_split, config.eval_spec(), 1, val_seed);
    } catch (const DataError&) {
        can_validate = false;
    }

    auto snapshot = [&] {
        state.params = copy_params(model.params);
        state.rng_state = rng_to_string(rng);
    };
    auto persist = [&] {
        if (options.checkpoint_dir.empty()) return;
        save_checkpoint(options.checkpoint_dir / "last.fsck", state);
    };

    TrainResult result;
    const dc::AdamConfig adam{config.lr};
    std::size_t ran = 0;
    try {
        while (state.episode < config.max_episodes && (options.stop_after == 0 || ran < options.stop_after)) {
            const auto episode = sample_episode(train_split, config.train_spec(), rng);
            model.params.zero_grad();
            double loss = 0.0, acc = 0.0;
            {
                dc::Tape tape;
                dc::TapeScope scope(tape);
                auto r = episode_forward(model, episode, source);
                tape.backward(r.loss);
                loss = r.loss.item();
                acc = r.accuracy;
            }
            check_gradients(model.params);
            dc::adam_step(model.params, state.adam, adam);
            ++state.episode;
            ++ran;
            result.losses.push_back(loss);
            if (options.log)
                *options.log << "episode," << state.episode << "," << format_loss(static_cast<float>(loss)) << ","
                             << acc << "\n";

            if (can_validate && state.episode % config.val_every == 0) {
                const auto val = evaluate(model, val_split, source, config.eval_spec(), config.val_episodes,
                                          val_seed, options.workers);
                const bool improved = val.mean > state.best.val_accuracy;
                if (improved) {
                    state.best.val_accuracy = val.mean;
                    state.best.episode = state.episode;
                    state.best.stale_checks = 0;
                    state.best.params = copy_params(model.params);
                } else {
                    ++state.best.stale_checks;
                }
                if (options.log)
                    *options.log << "check," << state.episode << "," << val.mean << "," << state.best.val_accuracy
                                 << "\n";
                snapshot();
                persist();
                if (!options.checkpoint_dir.empty() && improved)
                    save_checkpoint(options.checkpoint_dir / "best.fsck", state);
                if (state.best.stale_checks >= config.patience) {
                    result.early_stopped = true;
                    break;
                }
            }
        }
    } catch (const NumericError&) {
        // Parameters are only updated after finite forward and backward passes,
        // so the current ones are the last good state.
        snapshot();
        persist();
        throw;
    }
    snapshot();
    persist();
    if (options.log) options.log->flush();

    result.episodes = state.episode;
    result.best.config = model.config;
    const auto& chosen = state.best.params.size() > 0 ? state.best.params : model.params;
    result.best.params = copy_params(chosen);
    result.state = std::move(state);
    return result;
}

}  // namespace fsv::engine
