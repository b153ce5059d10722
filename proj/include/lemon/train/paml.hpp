#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lemon/autodiff/optim.hpp"
#include "lemon/autodiff/weights.hpp"
#include "lemon/common/rng.hpp"
#include "lemon/train/model.hpp"
#include "lemon/train/run.hpp"

namespace lemon::train {

enum class PamlOrder { First, Second };

struct PamlConfig {
    int n_ops = 5;              // N, families per meta step
    int inner_steps = 5;        // p
    double inner_lr = 1e-3;     // eta
    double meta_lr = 1e-3;      // eta_m
    std::size_t support = 10;
    std::size_t query = 20;
    PamlOrder order = PamlOrder::First;
    /// Literal meta-SGD step; false uses AdamW (state reset per run).
    bool meta_sgd = true;
    /// Largest trainable parameter count allowed in second-order mode.
    std::size_t second_order_limit = 20000;

    /// ConfigError unless N >= 1, p >= 0, sizes >= 1 and rates >= 0.
    void validate() const;
};

std::string to_json(const PamlConfig& c);
PamlConfig paml_config_from_json(const std::string& text);

using LossFn = std::function<ad::Var(const ad::Weights&)>;

/// One task: support and query losses of the same family.
struct Episode {
    std::string family;
    LossFn support;
    LossFn query;
};

struct EpisodeStats {
    std::string family;
    /// Support loss before each inner step (p entries).
    std::vector<double> support_losses;
    double query_loss = 0.0;
};

struct MetaGradient {
    std::vector<std::string> names;  // trainable entries, store order
    std::vector<ad::Tensor> grads;   // summed over episodes in order
    std::vector<EpisodeStats> episodes;

    double norm() const;
};

/// Sum over episodes of the query-loss gradient at the adapted parameters.
/// Each episode starts from theta and takes p plain SGD steps on its support
/// loss. First order treats the adapted parameters as constants; second
/// order differentiates through the inner loop. theta is never modified.
/// ConfigError for second order above the parameter limit.
MetaGradient paml_meta_gradient(const ad::ParamStore& theta, const std::vector<Episode>& episodes,
                                const PamlConfig& cfg);

/// One meta update: theta -= eta_m * meta-gradient (or an AdamW step on it
/// when cfg.meta_sgd is false, which requires `meta_opt`).
MetaGradient paml_step(ad::ParamStore& theta, const std::vector<Episode>& episodes, const PamlConfig& cfg,
                       ad::AdamW* meta_opt = nullptr);

/// Support and query draws for one family, as indices into its pool.
struct EpisodeSet {
    std::string family;
    std::vector<std::size_t> support;
    std::vector<std::size_t> query;

    bool disjoint() const;
};

/// Draws support + query indices without replacement. DataError when the
/// pool holds fewer than support + query items.
EpisodeSet sample_episode(const pdelab::Dataset& pool, std::size_t support, std::size_t query, Rng& rng);

/// Builds the support/query losses of an episode set for `spec`.
Episode make_episode(const ModelSpec& spec, const pdelab::Dataset& pool, const EpisodeSet& set);

struct PamlResult {
    ad::ParamStore params;
    std::vector<LogRow> log;
    std::vector<std::string> episode_lines;
};

/// Meta-pretraining: each outer step samples N distinct families from
/// `pools` (one dataset per family), draws an episode set from each and
/// applies paml_step. Logs one row per outer step (mean query loss and
/// meta-gradient norm) and every episode to episodes.log.
/// ConfigError when fewer than N pools are given.
PamlResult paml_pretrain(const ModelSpec& spec, ad::ParamStore params, const std::vector<pdelab::Dataset>& pools,
                         const PamlConfig& cfg, long outer_steps, std::uint64_t seed, RunDir* run = nullptr);

}  // namespace lemon::train
