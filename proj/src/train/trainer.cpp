#include "lemon/train/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "json.hpp"
#include "lemon/autodiff/optim.hpp"
#include "lemon/common/error.hpp"
#include "lemon/common/rng.hpp"

namespace lemon::train {

using json = nlohmann::json;

void TrainConfig::validate() const {
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be >= 0");
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw ConfigError("train: warmup_fraction outside [0, 1]");
    if (!(min_lr_ratio >= 0.0 && min_lr_ratio <= 1.0)) throw ConfigError("train: min_lr_ratio outside [0, 1]");
    if (checkpoint_every < 0) throw ConfigError("train: checkpoint_every must be >= 0");
}

std::string to_json(const TrainConfig& c) {
    const json j = {{"steps", c.steps},
                    {"batch_size", c.batch_size},
                    {"lr", c.lr},
                    {"weight_decay", c.weight_decay},
                    {"warmup_fraction", c.warmup_fraction},
                    {"min_lr_ratio", c.min_lr_ratio},
                    {"clip", c.clip},
                    {"seed", c.seed},
                    {"checkpoint_every", c.checkpoint_every}};
    return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
    TrainConfig c;
    try {
        const json j = json::parse(text);
        auto read = [&](const char* key, auto& out) {
            if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
        };
        read("steps", c.steps);
        read("batch_size", c.batch_size);
        read("lr", c.lr);
        read("weight_decay", c.weight_decay);
        read("warmup_fraction", c.warmup_fraction);
        read("min_lr_ratio", c.min_lr_ratio);
        read("clip", c.clip);
        read("seed", c.seed);
        read("checkpoint_every", c.checkpoint_every);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------- sampler

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_(std::min(batch_size, n)), seed_(seed), order_(n) {
    if (n == 0) throw DataError("batch sampler: empty dataset");
    reshuffle();
}

void BatchSampler::reshuffle() {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    Rng rng(derive_seed(seed_, 0xba7c, static_cast<std::uint64_t>(epoch_)));
    for (std::size_t i = n_; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
        std::swap(order_[i - 1], order_[j]);
    }
    pos_ = 0;
}

std::size_t BatchSampler::batches_per_epoch() const noexcept { return n_ / batch_; }

std::vector<std::size_t> BatchSampler::next() {
    if (pos_ + batch_ > n_) {
        ++epoch_;
        reshuffle();
    }
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(pos_ + batch_));
    pos_ += batch_;
    return out;
}

// ---------------------------------------------------------------- loop

namespace {

std::string checkpoint_extra(const ModelSpec& spec, const TrainConfig& cfg, long step) {
    const json j = {{"model", json::parse(to_json(spec))},
                    {"train", json::parse(to_json(cfg))},
                    {"step", step}};
    return j.dump();
}

/// Shared optimization loop; `weights` rebinds the current parameters.
std::vector<LogRow> run_loop(const ModelSpec& spec, ad::ParamStore& params,
                             const std::function<ad::Weights()>& weights, const pdelab::Dataset& data,
                             const TrainConfig& cfg, RunDir* run, const EpochHook& on_epoch) {
    cfg.validate();
    spec.check_grid(data.grid);
    if (data.items.empty()) throw DataError("training dataset is empty");
    ad::AdamWConfig oc;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    oc.clip = cfg.clip;
    ad::Schedule sched = ad::Schedule::cosine(cfg.steps, cfg.warmup_fraction);
    sched.min_ratio = cfg.min_lr_ratio;
    ad::AdamW opt(oc, sched);
    BatchSampler sampler(data.items.size(), cfg.batch_size, cfg.seed);

    std::vector<LogRow> log;
    log.reserve(static_cast<std::size_t>(cfg.steps));
    for (long step = 0; step < cfg.steps; ++step) {
        const long epoch_before = sampler.epoch();
        const auto idx = sampler.next();
        if (on_epoch && sampler.epoch() != epoch_before) on_epoch(sampler.epoch(), weights());
        const auto batch = spec.batch(data, idx);
        params.zero_grad();
        const ad::Var loss = spec.loss(weights(), batch);
        if (!std::isfinite(loss.item())) throw NumericError("training loss is not finite at step " + std::to_string(step));
        ad::backward(loss);
        const auto st = opt.step(params);
        const LogRow row{step, st.lr, loss.item(), st.grad_norm};
        log.push_back(row);
        if (run) {
            run->log(row);
            if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 && step + 1 < cfg.steps) {
                run->checkpoint(step + 1, params, checkpoint_extra(spec, cfg, step + 1));
            }
        }
    }
    params.zero_grad();
    if (on_epoch && cfg.steps > 0) on_epoch(sampler.epoch() + 1, weights());
    if (run) run->checkpoint(cfg.steps, params, checkpoint_extra(spec, cfg, cfg.steps));
    return log;
}

}  // namespace

TrainResult pretrain(const ModelSpec& spec, ad::ParamStore params, const pdelab::Dataset& data,
                     const TrainConfig& cfg, RunDir* run) {
    TrainResult r;
    r.log = run_loop(spec, params, [&] { return ad::Weights::bind(params); }, data, cfg, run, {});
    r.params = std::move(params);
    return r;
}

double smoothed_loss(const std::vector<LogRow>& log, std::size_t window, bool from_start) {
    if (log.empty() || window == 0) throw ConfigError("smoothed_loss: empty log or window");
    const std::size_t n = std::min(window, log.size());
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += from_start ? log[i].loss : log[log.size() - n + i].loss;
    return s / static_cast<double>(n);
}

std::string to_string(FinetuneMode m) { return m == FinetuneMode::Regular ? "regular" : "lora"; }

FinetuneMode finetune_mode_from_string(const std::string& s) {
    if (s == "regular") return FinetuneMode::Regular;
    if (s == "lora") return FinetuneMode::Lora;
    throw ConfigError("unknown fine-tune mode '" + s + "' (expected regular or lora)");
}

FinetuneResult finetune(const ModelSpec& spec, const ad::ParamStore& checkpoint, const pdelab::Dataset& data,
                        const FinetuneConfig& cfg, const EpochHook& on_epoch, RunDir* run) {
    FinetuneResult r;
    if (cfg.mode == FinetuneMode::Regular) {
        ad::ParamStore params = checkpoint.clone();
        for (const auto& p : checkpoint.entries()) params.set_trainable(p.name, true);
        r.trainable_count = params.count(true);
        r.log = run_loop(spec, params, [&] { return ad::Weights::bind(params); }, data, cfg.train, run, on_epoch);
        r.params = std::move(params);
        return r;
    }
    const auto targets = cfg.lora.targets.empty() ? spec.default_lora_targets() : cfg.lora.targets;
    auto adapted = lora::attach(checkpoint, targets, cfg.lora.rank, cfg.lora.alpha, derive_seed(cfg.train.seed, 0x10a));
    r.trainable_count = adapted.params.count(true);
    r.log = run_loop(spec, adapted.params, [&] { return adapted.weights(); }, data, cfg.train, run, on_epoch);
    r.params = lora::merge(adapted);
    r.adapted = std::move(adapted);
    return r;
}

}  // namespace lemon::train
