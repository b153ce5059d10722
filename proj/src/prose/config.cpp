#include "lemon/prose/config.hpp"

#include "json.hpp"
#include "lemon/common/error.hpp"

namespace lemon::prose {

using json = nlohmann::json;

void ProseConfig::validate() const {
    auto positive = [](int v, const char* what) {
        if (v < 1) throw ConfigError(std::string("prose config: ") + what + " must be >= 1, got " + std::to_string(v));
    };
    positive(d_model, "d_model");
    positive(n_heads, "n_heads");
    positive(layers.data_encoder, "data-encoder layers");
    positive(layers.symbol_encoder, "symbol-encoder layers");
    positive(layers.fusion, "fusion layers");
    positive(layers.data_decoder, "data-decoder layers");
    positive(ffn_hidden, "ffn_hidden");
    positive(vocab_size, "vocab_size");
    positive(max_symbols, "max_symbols");
    positive(n_x, "n_x");
    positive(n_t_in, "n_t_in");
    positive(n_t_out, "n_t_out");
    if (d_model % n_heads != 0) {
        throw ConfigError("prose config: d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                          std::to_string(n_heads));
    }
}

ProseConfig full_scale_config() {
    ProseConfig c;
    c.d_model = 512;
    c.n_heads = 8;
    c.layers = {2, 4, 8, 8};
    c.ffn_hidden = 2048;
    return c;
}

std::string to_json(const ProseConfig& c) {
    const json j = {{"d_model", c.d_model},
                    {"n_heads", c.n_heads},
                    {"layers",
                     {{"data_encoder", c.layers.data_encoder},
                      {"symbol_encoder", c.layers.symbol_encoder},
                      {"fusion", c.layers.fusion},
                      {"data_decoder", c.layers.data_decoder}}},
                    {"ffn_hidden", c.ffn_hidden},
                    {"vocab_size", c.vocab_size},
                    {"max_symbols", c.max_symbols},
                    {"n_x", c.n_x},
                    {"n_t_in", c.n_t_in},
                    {"n_t_out", c.n_t_out},
                    {"normalize_inputs", c.normalize_inputs}};
    return j.dump();
}

namespace {

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

json parse(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

ProseConfig prose_config_from_json(const std::string& text) {
    const json j = parse(text, "prose config");
    ProseConfig c;
    try {
        read(j, "d_model", c.d_model);
        read(j, "n_heads", c.n_heads);
        if (j.contains("layers")) {
            const auto& l = j.at("layers");
            read(l, "data_encoder", c.layers.data_encoder);
            read(l, "symbol_encoder", c.layers.symbol_encoder);
            read(l, "fusion", c.layers.fusion);
            read(l, "data_decoder", c.layers.data_decoder);
        }
        read(j, "ffn_hidden", c.ffn_hidden);
        read(j, "vocab_size", c.vocab_size);
        read(j, "max_symbols", c.max_symbols);
        read(j, "n_x", c.n_x);
        read(j, "n_t_in", c.n_t_in);
        read(j, "n_t_out", c.n_t_out);
        read(j, "normalize_inputs", c.normalize_inputs);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("prose config: ") + e.what());
    }
    return c;
}

void DeepONetConfig::validate() const {
    for (int v : {n_x, n_t_in, n_t_out, width, depth, basis}) {
        if (v < 1) throw ConfigError("deeponet config: every size must be >= 1");
    }
}

std::string to_json(const DeepONetConfig& c) {
    const json j = {{"n_x", c.n_x},     {"n_t_in", c.n_t_in}, {"n_t_out", c.n_t_out},
                    {"width", c.width}, {"depth", c.depth},   {"basis", c.basis}};
    return j.dump();
}

DeepONetConfig deeponet_config_from_json(const std::string& text) {
    const json j = parse(text, "deeponet config");
    DeepONetConfig c;
    try {
        read(j, "n_x", c.n_x);
        read(j, "n_t_in", c.n_t_in);
        read(j, "n_t_out", c.n_t_out);
        read(j, "width", c.width);
        read(j, "depth", c.depth);
        read(j, "basis", c.basis);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("deeponet config: ") + e.what());
    }
    return c;
}

}  // namespace lemon::prose
