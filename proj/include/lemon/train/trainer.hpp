#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lemon/adapters/lora.hpp"
#include "lemon/train/model.hpp"
#include "lemon/train/run.hpp"

namespace lemon::train {

struct TrainConfig {
    long steps = 2000;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double warmup_fraction = 0.1;
    double min_lr_ratio = 0.0;
    double clip = 1.0;
    std::uint64_t seed = 0;
    /// Intermediate checkpoints in the run directory every k steps (0: final only).
    long checkpoint_every = 0;

    void validate() const;
};

std::string to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

struct TrainResult {
    ad::ParamStore params;
    std::vector<LogRow> log;
};

/// Shuffled passes over [0, n): each epoch is a fresh permutation drawn from
/// the seed; batches never straddle two epochs.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);
    std::vector<std::size_t> next();
    /// Completed passes.
    long epoch() const noexcept { return epoch_; }
    std::size_t batches_per_epoch() const noexcept;

private:
    void reshuffle();

    std::size_t n_;
    std::size_t batch_;
    std::uint64_t seed_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
    long epoch_ = 0;
};

/// Mini-batch AdamW on the trainable entries of `params` (cosine schedule
/// with warmup, global clip). Every step is logged; with a run directory the
/// log is mirrored to log.csv and the final store saved as a checkpoint.
/// DataError on a grid mismatch or an empty dataset.
TrainResult pretrain(const ModelSpec& spec, ad::ParamStore params, const pdelab::Dataset& data,
                     const TrainConfig& cfg, RunDir* run = nullptr);

/// Mean loss over the last `window` log rows, or the first `window` rows
/// when `from_start` is set.
double smoothed_loss(const std::vector<LogRow>& log, std::size_t window, bool from_start);

enum class FinetuneMode { Regular, Lora };

std::string to_string(FinetuneMode m);
FinetuneMode finetune_mode_from_string(const std::string& s);

struct LoraOptions {
    int rank = 4;
    double alpha = 1.0;
    /// Empty: the model's default targets.
    std::vector<std::string> targets;
};

struct FinetuneConfig {
    FinetuneMode mode = FinetuneMode::Regular;
    TrainConfig train{};
    LoraOptions lora{};
};

struct FinetuneResult {
    /// Tuned parameters; LoRA factors merged in lora mode.
    ad::ParamStore params;
    /// Adapted store (frozen base plus factors) in lora mode.
    std::optional<lora::AdaptedParams> adapted;
    std::size_t trainable_count = 0;
    std::vector<LogRow> log;
};

/// Called after every completed pass over the fine-tuning data with the
/// current effective weights.
using EpochHook = std::function<void(long epoch, const ad::Weights& w)>;

/// Regular mode trains every parameter of a copy of `checkpoint`; lora mode
/// attaches adapters (seeded from the train seed) and trains only the factors.
FinetuneResult finetune(const ModelSpec& spec, const ad::ParamStore& checkpoint, const pdelab::Dataset& data,
                        const FinetuneConfig& cfg, const EpochHook& on_epoch = {}, RunDir* run = nullptr);

}  // namespace lemon::train
