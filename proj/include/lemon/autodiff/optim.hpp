#pragma once

#include <unordered_map>

#include "lemon/autodiff/params.hpp"

namespace lemon::ad {

/// Learning rate by step: linear warmup from 0, then cosine decay to
/// min_ratio * base at total_steps. Constant when total_steps == 0.
struct Schedule {
    long total_steps = 0;
    long warmup_steps = 0;
    double min_ratio = 0.0;

    double lr(long step, double base) const;
    /// Warmup covering `fraction` of the run.
    static Schedule cosine(long total, double warmup_fraction = 0.1);
};

struct AdamWConfig {
    double lr = 1e-4;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Global gradient-norm clip; <= 0 disables.
    double clip = 1.0;
    /// false turns the update into decoupled-decay SGD (no moments).
    bool use_moments = true;
};

struct StepStats {
    double lr = 0.0;
    double grad_norm = 0.0;  // before clipping
};

/// Global L2 norm over the trainable gradients present.
double grad_norm(const ParamStore& params);
/// Scales gradients so the global norm is at most max_norm; returns the
/// norm before scaling.
double clip_grad_norm(ParamStore& params, double max_norm);

/// AdamW with decoupled weight decay. Parameters without a gradient are
/// skipped. NumericError naming the parameter on a non-finite gradient.
class AdamW {
public:
    explicit AdamW(AdamWConfig cfg = {}, Schedule schedule = {});

    StepStats step(ParamStore& params);
    long steps() const noexcept { return t_; }
    const AdamWConfig& config() const noexcept { return cfg_; }

private:
    AdamWConfig cfg_;
    Schedule schedule_;
    long t_ = 0;
    std::unordered_map<std::string, std::pair<Tensor, Tensor>> moments_;
};

/// p - eta * g.
Tensor sgd(const Tensor& p, const Tensor& g, double eta);
/// In-place plain gradient step over trainable parameters with gradients.
void sgd_step(ParamStore& params, double eta);

}  // namespace lemon::ad
