#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lemon/autodiff/weights.hpp"
#include "lemon/exprtree/vocabulary.hpp"
#include "lemon/pdelab/dataset.hpp"
#include "lemon/prose/config.hpp"

namespace lemon::prose {

/// One training or evaluation batch.
struct Batch {
    std::size_t size = 0;
    ad::Tensor inputs;   // [b x n_t_in x n_x]
    std::size_t max_len = 0;
    std::vector<int> symbols;           // [b x max_len] token ids
    /// [b x max_len], 1 on the padded tail of each row. Every PAD id must be
    /// masked; the ids under the mask are otherwise never read.
    std::vector<std::uint8_t> padding;
    int pad_id = 0;
    ad::Tensor targets;        // [b x n_t_out x n_x]
    std::vector<double> tau;   // [n_t_out], output times as fractions of the horizon

    /// DimensionError when shapes disagree with each other or with cfg, or
    /// when the mask is not a per-row suffix covering every PAD id.
    void validate(const ProseConfig& cfg) const;
};

/// Assembles items[idx] into a batch. Symbols are tokenized with `vocab` and
/// padded to the longest sequence; a null vocabulary leaves them empty (for
/// models without a symbol input). VocabularyError on unknown tokens.
Batch make_batch(const pdelab::Dataset& data, std::span<const std::size_t> idx, const expr::Vocabulary* vocab);

/// Output times of a dataset grid as fractions of its horizon.
std::vector<double> normalized_output_times(const pdelab::Grid& grid);

/// Fresh parameters: fan-in uniform for projections, normal(0, 0.02) for
/// embeddings, unit gains and zero biases for norms.
ad::ParamStore init_params(const ProseConfig& cfg, std::uint64_t seed);

/// Attention projection names (W_q, W_k, W_v, W_o of every block).
std::vector<std::string> attention_weight_names(const ProseConfig& cfg);
/// Feed-forward matrix names of every block.
std::vector<std::string> ffn_weight_names(const ProseConfig& cfg);

/// Predictions [b x n_t_out x n_x].
ad::Var forward(const ProseConfig& cfg, const ad::Weights& w, const Batch& batch);

/// Mean over the batch of |pred - target|^2 / (|target|^2 + 1e-12). A zero
/// target is logged as a warning.
ad::Var rel_sq_error(const ad::Var& pred, const ad::Tensor& target);

inline constexpr double kRelEps = 1e-12;

}  // namespace lemon::prose
