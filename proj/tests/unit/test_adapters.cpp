#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "lemon/adapters/lora.hpp"
#include "lemon/autodiff/optim.hpp"
#include "lemon/common/error.hpp"
#include "lemon/common/rng.hpp"
#include "lemon/prose/model.hpp"

using namespace lemon;
using ad::Tensor;
using ad::Var;

namespace {

prose::ProseConfig tiny_config() {
    prose::ProseConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.layers = {1, 1, 1, 1};
    c.ffn_hidden = 12;
    c.vocab_size = 20;
    c.max_symbols = 12;
    c.n_x = 6;
    c.n_t_in = 3;
    c.n_t_out = 4;
    return c;
}

prose::Batch random_batch(const prose::ProseConfig& c, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    prose::Batch b;
    b.size = n;
    b.inputs = Tensor({n, std::size_t(c.n_t_in), std::size_t(c.n_x)});
    b.targets = Tensor({n, std::size_t(c.n_t_out), std::size_t(c.n_x)});
    for (auto& v : b.inputs.data) v = rng.uniform(-1, 1);
    for (auto& v : b.targets.data) v = rng.uniform(-1, 1);
    b.max_len = 5;
    for (std::size_t i = 0; i < n * 5; ++i) b.symbols.push_back(static_cast<int>(rng.uniform_int(3, 19)));
    b.padding.assign(n * 5, 0);
    for (int j = 0; j < c.n_t_out; ++j) b.tau.push_back((j + 1.0) / c.n_t_out);
    return b;
}

Tensor eval(const prose::ProseConfig& c, const ad::Weights& w, const prose::Batch& b) {
    ad::NoGradGuard off;
    return prose::forward(c, w, b).value();
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

/// Runs `steps` AdamW steps on the adapted model.
void train(const prose::ProseConfig& c, lora::AdaptedParams& ad_params, int steps, double weight_decay) {
    ad::AdamWConfig oc;
    oc.lr = 1e-2;
    oc.weight_decay = weight_decay;
    ad::AdamW opt(oc);
    for (int s = 0; s < steps; ++s) {
        const auto b = random_batch(c, 2, 100 + s);
        ad_params.params.zero_grad();
        ad::backward(prose::rel_sq_error(prose::forward(c, ad_params.weights(), b), b.targets));
        opt.step(ad_params.params);
    }
}

}  // namespace

TEST_CASE("attach leaves the model output unchanged") {
    const auto c = tiny_config();
    const auto base = prose::init_params(c, 1);
    const auto adapted = lora::attach(base, prose::attention_weight_names(c), 2, 5.0, 7);
    const auto b = random_batch(c, 3, 2);
    CHECK(eval(c, adapted.weights(), b).data == eval(c, ad::Weights::bind(base), b).data);
    for (const auto& p : adapted.params.entries()) {
        const bool factor = p.name.find(".lora_") != std::string::npos;
        CHECK(p.trainable == factor);
    }
}

TEST_CASE("trainable parameter count") {
    prose::ProseConfig c;
    c.vocab_size = 100;
    const auto base = prose::init_params(c, 1);
    const auto targets = prose::attention_weight_names(c);
    const auto adapted = lora::attach(base, targets, 8, 5.0, 2);
    std::size_t expect = 0, full = 0;
    for (const auto& t : targets) {
        const auto& s = base.get(t).shape();
        expect += 8 * (s[0] + s[1]);
        full += s[0] * s[1];
    }
    CHECK(adapted.params.count(true) == expect);
    CHECK(adapted.adapter_param_count() == expect);
    CHECK(expect < full);
    CHECK(adapted.params.count(true) < base.count(true));
}

TEST_CASE("full rank adapters represent any delta") {
    // m = 6, n = 4, r = 4: solve A = D B^T (B B^T)^-1 / alpha by Gauss-Jordan.
    ad::ParamStore base;
    Rng rng(3);
    Tensor w({6, 4});
    for (auto& v : w.data) v = rng.uniform(-1, 1);
    base.add("W", w);
    auto adapted = lora::attach(base, {"W"}, 4, 2.0, 5);
    Tensor delta({6, 4});
    for (auto& v : delta.data) v = rng.uniform(-1, 1);

    const auto& B = adapted.params.get("W.lora_B").value().data;  // [4 x 4]
    double G[4][8] = {};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j)
            for (int k = 0; k < 4; ++k) G[i][j] += B[i * 4 + k] * B[j * 4 + k];
        G[i][4 + i] = 1.0;
    }
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::abs(G[r][col]) > std::abs(G[piv][col])) piv = r;
        std::swap(G[col], G[piv]);
        const double d = G[col][col];
        for (double& v : G[col]) v /= d;
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            const double f = G[r][col];
            for (int k = 0; k < 8; ++k) G[r][k] -= f * G[col][k];
        }
    }
    auto& A = adapted.params.entry("W.lora_A").var.leaf_value().data;  // [6 x 4]
    for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 4; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 4; ++k) {
                double dbt = 0.0;
                for (int l = 0; l < 4; ++l) dbt += delta.data[i * 4 + l] * B[k * 4 + l];
                acc += dbt * G[k][4 + j];
            }
            A[i * 4 + j] = acc / 2.0;
        }
    }
    const Tensor merged = lora::merge(adapted).get("W").value();
    double err = 0.0;
    for (std::size_t i = 0; i < 24; ++i) err = std::max(err, std::abs(merged.data[i] - w.data[i] - delta.data[i]));
    CHECK(err < 1e-6);
}

TEST_CASE("merge") {
    SUBCASE("scalar arithmetic") {
        ad::ParamStore base;
        base.add("W", Tensor({1, 1}, {2.0}));
        auto adapted = lora::attach(base, {"W"}, 1, 5.0, 1);
        adapted.params.entry("W.lora_A").var.leaf_value().data[0] = 3.0;
        adapted.params.entry("W.lora_B").var.leaf_value().data[0] = 4.0;
        const auto merged = lora::merge(adapted);
        CHECK(merged.get("W").item() == 62.0);
        CHECK_FALSE(merged.contains("W.lora_A"));
        CHECK(merged.entry("W").trainable);
    }
    SUBCASE("alpha zero returns the base exactly") {
        const auto c = tiny_config();
        const auto base = prose::init_params(c, 2);
        auto adapted = lora::attach(base, prose::attention_weight_names(c), 2, 0.0, 3);
        for (const auto& a : adapted.adapters)
            for (auto& v : adapted.params.entry(a.a_name()).var.leaf_value().data) v = 0.5;
        CHECK(lora::merge(adapted).identical(base));
    }
    SUBCASE("random 8x6 rank 2: merged forward equals adapted forward") {
        ad::ParamStore base;
        Rng rng(4);
        Tensor w({8, 6});
        for (auto& v : w.data) v = rng.uniform(-1, 1);
        base.add("W", w);
        auto adapted = lora::attach(base, {"W"}, 2, 1.5, 5);
        for (auto& v : adapted.params.entry("W.lora_A").var.leaf_value().data) v = rng.uniform(-1, 1);
        const auto merged = lora::merge(adapted);
        Tensor x({5, 8});
        for (auto& v : x.data) v = rng.uniform(-1, 1);
        ad::NoGradGuard off;
        const Tensor ya = matmul(Var(x), adapted.weights().get("W")).value();
        const Tensor ym = matmul(Var(x), merged.get("W")).value();
        CHECK(max_abs_diff(ya, ym) <= 1e-10);
    }
    SUBCASE("trained prose-lite: merged equals adapted") {
        const auto c = tiny_config();
        const auto base = prose::init_params(c, 6);
        auto adapted = lora::attach(base, prose::attention_weight_names(c), 2, 5.0, 7);
        train(c, adapted, 20, 0.0);
        const auto merged = lora::merge(adapted);
        for (int s = 0; s < 3; ++s) {
            const auto b = random_batch(c, 4, 50 + s);
            const double diff = max_abs_diff(eval(c, adapted.weights(), b), eval(c, ad::Weights::bind(merged), b));
            CHECK(diff <= 1e-10);
        }
        CHECK(max_abs_diff(eval(c, adapted.weights(), random_batch(c, 4, 9)),
                           eval(c, ad::Weights::bind(base), random_batch(c, 4, 9))) > 0.0);
    }
}

TEST_CASE("base weights stay bit-identical through 100 fine-tuning steps") {
    const auto c = tiny_config();
    const auto base = prose::init_params(c, 8);
    auto adapted = lora::attach(base, prose::attention_weight_names(c), 2, 5.0, 9);
    train(c, adapted, 100, 1e-2);
    for (const auto& p : base.entries()) {
        INFO(p.name);
        CHECK(adapted.params.get(p.name).value().data == p.var.value().data);
    }
}

TEST_CASE("attach errors") {
    const auto c = tiny_config();
    const auto base = prose::init_params(c, 1);
    CHECK_THROWS_AS(lora::attach(base, {"missing"}, 2, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(lora::attach(base, {"data.in.b"}, 1, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(lora::attach(base, {"data.L0.attn.W_q"}, 9, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(lora::attach(base, {"data.L0.attn.W_q"}, 0, 1.0, 1), ConfigError);
    CHECK_THROWS_AS(lora::attach(base, {"data.L0.attn.W_q", "data.L0.attn.W_q"}, 1, 1.0, 1), ConfigError);
    CHECK_NOTHROW(lora::attach(base, {"data.L0.attn.W_q"}, 8, 1.0, 1));
}

TEST_CASE("adapter-only checkpoints") {
    const auto c = tiny_config();
    const auto base = prose::init_params(c, 10);
    auto adapted = lora::attach(base, prose::attention_weight_names(c), 2, 5.0, 11);
    train(c, adapted, 5, 0.0);
    const auto dir = std::filesystem::temp_directory_path() / "lemon_lora_test";
    std::filesystem::remove_all(dir);
    lora::save_adapters(adapted, dir);
    const auto back = lora::load_adapters(base, dir);
    CHECK(back.adapters == adapted.adapters);
    CHECK(back.params.identical(adapted.params));

    auto other = tiny_config();
    other.d_model = 12;
    other.n_heads = 2;
    CHECK_THROWS_AS(lora::load_adapters(prose::init_params(other, 1), dir), DataError);
    CHECK(lora::adapters_from_json(lora::to_json(adapted.adapters)) == adapted.adapters);
    std::filesystem::remove_all(dir);
}
