#include "lemon/prose/model.hpp"

#include <cmath>

#include "lemon/common/error.hpp"
#include "lemon/common/log.hpp"
#include "lemon/common/rng.hpp"

namespace lemon::prose {

using ad::Shape;
using ad::Tensor;
using ad::Var;
using ad::Weights;

namespace {

constexpr double kMaskValue = -1e30;

std::string layer_prefix(const char* block, int i) { return std::string(block) + ".L" + std::to_string(i) + "."; }

// ---------------------------------------------------------------- init

class Initializer {
public:
    Initializer(ad::ParamStore& ps, std::uint64_t seed) : ps_(ps), rng_(seed) {}

    void linear(const std::string& name, std::size_t in, std::size_t out, bool bias = true) {
        Tensor w({in, out});
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (auto& v : w.data) v = rng_.uniform(-bound, bound);
        ps_.add(name + (bias ? ".W" : ""), std::move(w));
        if (bias) ps_.add(name + ".b", Tensor({out}));
    }
    void embedding(const std::string& name, std::size_t rows, std::size_t d) {
        Tensor t({rows, d});
        for (auto& v : t.data) v = rng_.normal(0.0, 0.02);
        ps_.add(name, std::move(t));
    }
    void norm(const std::string& name, std::size_t d) {
        ps_.add(name + ".g", Tensor({d}, 1.0));
        ps_.add(name + ".b", Tensor({d}));
    }
    void attention(const std::string& name, std::size_t d) {
        for (const char* p : {".W_q", ".W_k", ".W_v", ".W_o"}) linear(name + p, d, d, false);
    }
    void ffn(const std::string& name, std::size_t d, std::size_t hidden) {
        linear(name + ".fc1", d, hidden);
        linear(name + ".fc2", hidden, d);
    }

private:
    ad::ParamStore& ps_;
    Rng rng_;
};

// ---------------------------------------------------------------- layers

Var linear(const Weights& w, const std::string& name, const Var& x) {
    return matmul(x, w[name + ".W"]) + w[name + ".b"];
}

Var norm(const Weights& w, const std::string& name, const Var& x) {
    return layer_norm(x, w[name + ".g"], w[name + ".b"]);
}

Var ffn(const Weights& w, const std::string& name, const Var& x) {
    return linear(w, name + ".fc2", gelu(linear(w, name + ".fc1", x)));
}

/// [b, T, d] -> [b, h, T, d/h]
Var split_heads(const Var& x, std::size_t h) {
    const auto& s = x.shape();
    return permute(reshape(x, {s[0], s[1], h, s[2] / h}), {0, 2, 1, 3});
}

Var merge_heads(const Var& x) {
    const auto& s = x.shape();
    return reshape(permute(x, {0, 2, 1, 3}), {s[0], s[2], s[1] * s[3]});
}

/// Multi-head attention of queries xq over keys/values xkv. `mask` is an
/// additive [b, 1, 1, S] tensor (0 or a large negative) or undefined.
Var attention(const Weights& w, const std::string& name, const Var& xq, const Var& xkv, const Var& mask,
              std::size_t heads) {
    const std::size_t d = xq.shape()[2];
    const Var q = split_heads(matmul(xq, w[name + ".W_q"]), heads);
    const Var k = split_heads(matmul(xkv, w[name + ".W_k"]), heads);
    const Var v = split_heads(matmul(xkv, w[name + ".W_v"]), heads);
    Var scores = matmul(q, transpose(k)) * (1.0 / std::sqrt(static_cast<double>(d / heads)));
    if (mask.defined()) scores = scores + mask;
    return matmul(merge_heads(matmul(softmax(scores), v)), w[name + ".W_o"]);
}

/// Pre-norm encoder block: self-attention then feed-forward.
Var encoder_block(const Weights& w, const std::string& p, const Var& x, const Var& mask, std::size_t heads) {
    const Var h = norm(w, p + "ln1", x);
    const Var y = x + attention(w, p + "attn", h, h, mask, heads);
    return y + ffn(w, p + "ffn", norm(w, p + "ln2", y));
}

/// Pre-norm block with self-attention, cross-attention over `memory`, feed-forward.
Var cross_block(const Weights& w, const std::string& p, const Var& x, const Var& memory, const Var& memory_mask,
                std::size_t heads) {
    const Var h = norm(w, p + "ln1", x);
    Var y = x + attention(w, p + "attn", h, h, Var(), heads);
    y = y + attention(w, p + "xattn", norm(w, p + "lnx", y), memory, memory_mask, heads);
    return y + ffn(w, p + "ffn", norm(w, p + "ln2", y));
}

}  // namespace

// ---------------------------------------------------------------- batch

void Batch::validate(const ProseConfig& cfg) const {
    const Shape in{size, static_cast<std::size_t>(cfg.n_t_in), static_cast<std::size_t>(cfg.n_x)};
    const Shape out{size, static_cast<std::size_t>(cfg.n_t_out), static_cast<std::size_t>(cfg.n_x)};
    if (size == 0) throw DimensionError("batch: empty");
    if (inputs.shape != in) {
        throw DimensionError("batch: inputs " + ad::shape_str(inputs.shape) + ", model expects " + ad::shape_str(in));
    }
    if (!targets.data.empty() && targets.shape != out) {
        throw DimensionError("batch: targets " + ad::shape_str(targets.shape) + ", model expects " + ad::shape_str(out));
    }
    if (tau.size() != static_cast<std::size_t>(cfg.n_t_out)) {
        throw DimensionError("batch: " + std::to_string(tau.size()) + " query times, model expects " +
                             std::to_string(cfg.n_t_out));
    }
    if (max_len == 0 || max_len > static_cast<std::size_t>(cfg.max_symbols)) {
        throw DimensionError("batch: symbol length " + std::to_string(max_len) + " outside [1, " +
                             std::to_string(cfg.max_symbols) + "]");
    }
    if (symbols.size() != size * max_len || padding.size() != symbols.size()) {
        throw DimensionError("batch: symbol/mask arrays do not match [b x max_len]");
    }
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (symbols[i] == pad_id && !padding[i]) {
            throw DimensionError("batch: unmasked PAD id at position " + std::to_string(i));
        }
        if (symbols[i] < 0 || symbols[i] >= cfg.vocab_size) {
            throw DimensionError("batch: token id " + std::to_string(symbols[i]) + " outside the vocabulary");
        }
    }
    for (std::size_t b = 0; b < size; ++b) {
        const auto* row = padding.data() + b * max_len;
        if (row[0]) throw DimensionError("batch: example " + std::to_string(b) + " has no symbols");
        for (std::size_t j = 1; j < max_len; ++j) {
            if (row[j - 1] && !row[j]) {
                throw DimensionError("batch: padding of example " + std::to_string(b) + " is not a suffix");
            }
        }
    }
}

std::vector<double> normalized_output_times(const pdelab::Grid& grid) {
    auto ts = grid.output_times();
    for (auto& t : ts) t /= grid.T;
    return ts;
}

Batch make_batch(const pdelab::Dataset& data, std::span<const std::size_t> idx, const expr::Vocabulary* vocab) {
    const auto& g = data.grid;
    const std::size_t nx = static_cast<std::size_t>(g.n_x);
    const std::size_t nin = static_cast<std::size_t>(g.n_t_in) * nx;
    const std::size_t nout = static_cast<std::size_t>(g.n_t_out) * nx;
    Batch b;
    b.size = idx.size();
    b.inputs = Tensor({b.size, static_cast<std::size_t>(g.n_t_in), nx});
    b.targets = Tensor({b.size, static_cast<std::size_t>(g.n_t_out), nx});
    b.tau = normalized_output_times(g);
    std::vector<std::vector<int>> ids;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= data.items.size()) throw DataError("batch: index " + std::to_string(idx[k]) + " out of range");
        const auto& it = data.items[idx[k]];
        if (it.input.size() != nin || it.output.size() != nout) {
            throw DimensionError("batch: item " + std::to_string(idx[k]) + " does not match the dataset grid");
        }
        std::copy(it.input.begin(), it.input.end(), b.inputs.data.begin() + static_cast<std::ptrdiff_t>(k * nin));
        std::copy(it.output.begin(), it.output.end(), b.targets.data.begin() + static_cast<std::ptrdiff_t>(k * nout));
        if (vocab) {
            ids.push_back(vocab->tokenize(it.symbols));
            b.max_len = std::max(b.max_len, ids.back().size());
        }
    }
    if (vocab) {
        b.pad_id = vocab->specials().pad;
        b.symbols.assign(b.size * b.max_len, b.pad_id);
        b.padding.assign(b.size * b.max_len, 1);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            for (std::size_t j = 0; j < ids[k].size(); ++j) {
                b.symbols[k * b.max_len + j] = ids[k][j];
                b.padding[k * b.max_len + j] = 0;
            }
        }
    }
    return b;
}

// ---------------------------------------------------------------- params

ad::ParamStore init_params(const ProseConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ad::ParamStore ps;
    Initializer init(ps, seed);
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto f = static_cast<std::size_t>(cfg.ffn_hidden);
    const auto nx = static_cast<std::size_t>(cfg.n_x);

    init.linear("data.in", nx, d);
    init.embedding("data.scale", 1, d);
    init.embedding("data.pos", static_cast<std::size_t>(cfg.n_t_in), d);
    for (int i = 0; i < cfg.layers.data_encoder; ++i) {
        const auto p = layer_prefix("data", i);
        init.norm(p + "ln1", d);
        init.attention(p + "attn", d);
        init.norm(p + "ln2", d);
        init.ffn(p + "ffn", d, f);
    }
    init.norm("data.ln_f", d);

    init.embedding("sym.embed", static_cast<std::size_t>(cfg.vocab_size), d);
    init.embedding("sym.pos", static_cast<std::size_t>(cfg.max_symbols), d);
    for (int i = 0; i < cfg.layers.symbol_encoder; ++i) {
        const auto p = layer_prefix("sym", i);
        init.norm(p + "ln1", d);
        init.attention(p + "attn", d);
        init.norm(p + "ln2", d);
        init.ffn(p + "ffn", d, f);
    }
    init.norm("sym.ln_f", d);

    for (const char* block : {"fusion", "dec"}) {
        const int n = std::string(block) == "fusion" ? cfg.layers.fusion : cfg.layers.data_decoder;
        if (std::string(block) == "dec") {
            init.linear("dec.time1", 1, d);
            init.linear("dec.time2", d, d);
        }
        for (int i = 0; i < n; ++i) {
            const auto p = layer_prefix(block, i);
            init.norm(p + "ln1", d);
            init.attention(p + "attn", d);
            init.norm(p + "lnx", d);
            init.attention(p + "xattn", d);
            init.norm(p + "ln2", d);
            init.ffn(p + "ffn", d, f);
        }
        init.norm(std::string(block) + ".ln_f", d);
    }
    init.linear("head", d, nx);
    return ps;
}

namespace {

template <class F>
void for_each_block(const ProseConfig& cfg, F f) {
    for (int i = 0; i < cfg.layers.data_encoder; ++i) f(layer_prefix("data", i), false);
    for (int i = 0; i < cfg.layers.symbol_encoder; ++i) f(layer_prefix("sym", i), false);
    for (int i = 0; i < cfg.layers.fusion; ++i) f(layer_prefix("fusion", i), true);
    for (int i = 0; i < cfg.layers.data_decoder; ++i) f(layer_prefix("dec", i), true);
}

}  // namespace

std::vector<std::string> attention_weight_names(const ProseConfig& cfg) {
    std::vector<std::string> out;
    for_each_block(cfg, [&](const std::string& p, bool cross) {
        for (const char* a : {"attn", "xattn"}) {
            if (std::string(a) == "xattn" && !cross) continue;
            for (const char* m : {".W_q", ".W_k", ".W_v", ".W_o"}) out.push_back(p + a + m);
        }
    });
    return out;
}

std::vector<std::string> ffn_weight_names(const ProseConfig& cfg) {
    std::vector<std::string> out;
    for_each_block(cfg, [&](const std::string& p, bool) {
        out.push_back(p + "ffn.fc1.W");
        out.push_back(p + "ffn.fc2.W");
    });
    return out;
}

// ---------------------------------------------------------------- forward

Var forward(const ProseConfig& cfg, const Weights& w, const Batch& batch) {
    batch.validate(cfg);
    const std::size_t b = batch.size;
    const auto h = static_cast<std::size_t>(cfg.n_heads);
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto nx = static_cast<std::size_t>(cfg.n_x);
    const auto nin = static_cast<std::size_t>(cfg.n_t_in);
    const auto nout = static_cast<std::size_t>(cfg.n_t_out);

    // Per-example amplitude: inputs are scaled to unit RMS, the log scale is
    // an extra feature and predictions are scaled back.
    Tensor scaled = batch.inputs;
    Tensor scale({b, 1, 1}, 1.0);
    Tensor log_scale({b, 1, 1}, 0.0);
    if (cfg.normalize_inputs) {
        const std::size_t per = nin * nx;
        for (std::size_t k = 0; k < b; ++k) {
            double ss = 0.0;
            for (std::size_t i = 0; i < per; ++i) ss += scaled.data[k * per + i] * scaled.data[k * per + i];
            const double s = std::sqrt(ss / static_cast<double>(per) + kRelEps);
            for (std::size_t i = 0; i < per; ++i) scaled.data[k * per + i] /= s;
            scale.data[k] = s;
            log_scale.data[k] = std::log(s);
        }
    }

    // Data encoder: one token per input frame.
    Var x = linear(w, "data.in", Var(std::move(scaled)));
    x = x + Var(std::move(log_scale)) * reshape(w["data.scale"], {d}) + w["data.pos"];
    for (int i = 0; i < cfg.layers.data_encoder; ++i) x = encoder_block(w, layer_prefix("data", i), x, Var(), h);
    x = norm(w, "data.ln_f", x);

    // Symbol encoder with key padding mask.
    const std::size_t S = batch.max_len;
    Tensor mask_t({b, 1, 1, S});
    for (std::size_t i = 0; i < b * S; ++i) mask_t.data[i] = batch.padding[i] ? kMaskValue : 0.0;
    const Var mask(std::move(mask_t));
    Var s = embedding(w["sym.embed"], batch.symbols, {b, S}) + slice(w["sym.pos"], 0, 0, S);
    for (int i = 0; i < cfg.layers.symbol_encoder; ++i) s = encoder_block(w, layer_prefix("sym", i), s, mask, h);
    s = norm(w, "sym.ln_f", s);

    // Fusion: data tokens attend over operator features.
    for (int i = 0; i < cfg.layers.fusion; ++i) x = cross_block(w, layer_prefix("fusion", i), x, s, mask, h);
    x = norm(w, "fusion.ln_f", x);

    // Decoder: output-time queries attend over fused data features.
    Tensor tau({nout, 1});
    for (std::size_t j = 0; j < nout; ++j) tau.data[j] = batch.tau[j];
    Var q = linear(w, "dec.time2", gelu(linear(w, "dec.time1", Var(std::move(tau)))));
    q = broadcast_to(q, {b, nout, d});
    for (int i = 0; i < cfg.layers.data_decoder; ++i) q = cross_block(w, layer_prefix("dec", i), q, x, Var(), h);
    q = norm(w, "dec.ln_f", q);

    Var out = linear(w, "head", q);
    if (cfg.normalize_inputs) out = out * Var(std::move(scale));
    return out;
}

Var rel_sq_error(const Var& pred, const Tensor& target) {
    if (pred.shape() != target.shape) {
        throw DimensionError("rel_sq_error: prediction " + ad::shape_str(pred.shape()) + " vs target " +
                             ad::shape_str(target.shape));
    }
    if (target.dim() < 1 || target.shape[0] == 0) throw DimensionError("rel_sq_error: empty batch");
    const std::size_t b = target.shape[0];
    const std::size_t per = target.size() / b;
    Tensor inv_den({b, 1});
    for (std::size_t k = 0; k < b; ++k) {
        double ss = 0.0;
        for (std::size_t i = 0; i < per; ++i) ss += target.data[k * per + i] * target.data[k * per + i];
        if (ss == 0.0) log::warn("rel_sq_error: example " + std::to_string(k) + " has a zero target; using the epsilon floor");
        inv_den.data[k] = 1.0 / (ss + kRelEps);
    }
    const Var diff = reshape(pred - Var(target), {b, per});
    return mean(sum(square(diff), 1, true) * Var(std::move(inv_den)));
}

}  // namespace lemon::prose
