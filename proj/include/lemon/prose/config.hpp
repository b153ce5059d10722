#pragma once

#include <cstddef>
#include <string>

namespace lemon::prose {

struct LayerCounts {
    int data_encoder = 2;
    int symbol_encoder = 2;
    int fusion = 2;
    int data_decoder = 2;

    friend bool operator==(const LayerCounts&, const LayerCounts&) = default;
};

/// PROSE-lite hyperparameters. Defaults are the desk-scale model.
struct ProseConfig {
    int d_model = 64;
    int n_heads = 4;
    LayerCounts layers{};
    int ffn_hidden = 256;
    int vocab_size = 0;      // set from the operator vocabulary
    int max_symbols = 48;    // longest symbol sequence incl. BOS/EOS
    int n_x = 128;
    int n_t_in = 8;
    int n_t_out = 16;
    /// Divide each example's inputs by their RMS and rescale predictions by it.
    bool normalize_inputs = true;

    /// ConfigError unless d_model % n_heads == 0 and every count >= 1.
    void validate() const;

    friend bool operator==(const ProseConfig&, const ProseConfig&) = default;
};

/// Full-width configuration (hidden 512, 8 heads, layers 2/4/8/8).
ProseConfig full_scale_config();

std::string to_json(const ProseConfig& cfg);
/// Accepts the to_json output; missing fields keep their defaults.
ProseConfig prose_config_from_json(const std::string& text);

/// DeepONet-lite baseline hyperparameters.
struct DeepONetConfig {
    int n_x = 128;
    int n_t_in = 8;
    int n_t_out = 16;
    int width = 64;
    int depth = 2;   // hidden layers per subnet
    int basis = 32;  // p, the number of branch/trunk outputs

    void validate() const;
    friend bool operator==(const DeepONetConfig&, const DeepONetConfig&) = default;
};

std::string to_json(const DeepONetConfig& cfg);
DeepONetConfig deeponet_config_from_json(const std::string& text);

}  // namespace lemon::prose
