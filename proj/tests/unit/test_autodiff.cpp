#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "lemon/autodiff/optim.hpp"
#include "lemon/autodiff/params.hpp"
#include "lemon/autodiff/var.hpp"
#include "lemon/common/error.hpp"
#include "lemon/common/rng.hpp"

using namespace lemon;
using namespace lemon::ad;

namespace {

using Fn = std::function<Var(const std::vector<Var>&)>;

Tensor random_tensor(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Scalar probe: sum(f(x) * w) with a fixed random weight so every output
/// element contributes with a distinct factor.
double probe_value(const Fn& f, const std::vector<Tensor>& xs, const Tensor& w) {
    NoGradGuard off;
    std::vector<Var> vs;
    for (const auto& x : xs) vs.emplace_back(x);
    const Var y = f(vs);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.value().data[i] * w.data[i];
    return s;
}

/// Compares backward() against central differences on every input entry.
void check_gradients(const Fn& f, std::vector<Tensor> xs, double h = 1e-5, double tol = 1e-6) {
    Rng rng(99);
    Shape out_shape;
    {
        NoGradGuard off;
        std::vector<Var> vs;
        for (const auto& x : xs) vs.emplace_back(x);
        out_shape = f(vs).shape();
    }
    const Tensor w = random_tensor(rng, out_shape, 0.5, 1.5);

    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.emplace_back(x, true);
    backward(sum(f(leaves) * Var(w)));

    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Var g = leaves[k].grad();
        REQUIRE(g.defined());
        REQUIRE(g.shape() == xs[k].shape);
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            auto plus = xs;
            auto minus = xs;
            plus[k].data[i] += h;
            minus[k].data[i] -= h;
            const double fd = (probe_value(f, plus, w) - probe_value(f, minus, w)) / (2.0 * h);
            const double an = g.value().data[i];
            INFO("input " << k << " entry " << i << " analytic " << an << " fd " << fd);
            CHECK(std::abs(an - fd) <= tol * std::max(1.0, std::abs(fd)));
        }
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST_CASE("elementwise gradients match central differences") {
    Rng rng(1);
    const Tensor a = random_tensor(rng, {5, 7});
    const Tensor b = random_tensor(rng, {5, 7});
    const Tensor pos = random_tensor(rng, {5, 7}, 0.5, 2.0);
    const Tensor row = random_tensor(rng, {7});
    const Tensor col = random_tensor(rng, {5, 1}, 0.5, 2.0);

    check_gradients([](auto& v) { return v[0] + v[1]; }, {a, b});
    check_gradients([](auto& v) { return v[0] - v[1]; }, {a, b});
    check_gradients([](auto& v) { return v[0] * v[1]; }, {a, b});
    check_gradients([](auto& v) { return v[0] / v[1]; }, {a, pos});
    check_gradients([](auto& v) { return v[0] + v[1]; }, {a, row});
    check_gradients([](auto& v) { return v[0] * v[1]; }, {a, row});
    check_gradients([](auto& v) { return v[0] / v[1]; }, {a, col});
    check_gradients([](auto& v) { return v[1] - v[0]; }, {a, col});
    check_gradients([](auto& v) { return -v[0]; }, {a});
    check_gradients([](auto& v) { return 2.5 * v[0] + 1.0; }, {a});
    check_gradients([](auto& v) { return 1.0 - v[0] / 3.0; }, {a});
    check_gradients([](auto& v) { return exp(v[0]); }, {a});
    check_gradients([](auto& v) { return log(v[0]); }, {pos});
    check_gradients([](auto& v) { return tanh(v[0]); }, {a});
    check_gradients([](auto& v) { return sin(v[0]); }, {a});
    check_gradients([](auto& v) { return cos(v[0]); }, {a});
    check_gradients([](auto& v) { return sqrt(v[0]); }, {pos});
    check_gradients([](auto& v) { return gelu(v[0] * 3.0); }, {a});
    check_gradients([](auto& v) { return square(v[0]); }, {a});
    check_gradients([](auto& v) { return pow(v[0], 2.5); }, {pos});

    Tensor away = a;
    for (auto& v : away.data) v = v >= 0 ? v + 0.1 : v - 0.1;  // keep FD off the kink
    check_gradients([](auto& v) { return relu(v[0]); }, {away});
}

TEST_CASE("shape and reduction gradients match central differences") {
    Rng rng(2);
    const Tensor a = random_tensor(rng, {5, 7});
    const Tensor c = random_tensor(rng, {3, 7});
    const Tensor t3 = random_tensor(rng, {2, 5, 7});

    check_gradients([](auto& v) { return reshape(v[0], {7, 5}); }, {a});
    check_gradients([](auto& v) { return transpose(v[0]); }, {a});
    check_gradients([](auto& v) { return permute(v[0], {2, 0, 1}); }, {t3});
    check_gradients([](auto& v) { return broadcast_to(v[0], {2, 5, 7}); }, {a});
    check_gradients([](auto& v) { return sum_to(v[0], {5, 1}); }, {t3});
    check_gradients([](auto& v) { return slice(v[0], 1, 2, 3); }, {a});
    check_gradients([](auto& v) { return pad(v[0], 0, 1, 2); }, {a});
    check_gradients([](auto& v) { return concat({v[0], v[1]}, 0); }, {a, c});
    check_gradients([](auto& v) { return concat({v[0], v[0]}, 1); }, {a});
    check_gradients([](auto& v) { return sum(v[0]); }, {a});
    check_gradients([](auto& v) { return sum(v[0], 0); }, {a});
    check_gradients([](auto& v) { return sum(v[0], 1, true); }, {t3});
    check_gradients([](auto& v) { return mean(v[0]); }, {a});
    check_gradients([](auto& v) { return mean(v[0], 2); }, {t3});
}

TEST_CASE("layer gradients match central differences") {
    Rng rng(3);
    const Tensor a = random_tensor(rng, {5, 7});
    const Tensor w = random_tensor(rng, {7, 3});
    const Tensor t3 = random_tensor(rng, {2, 5, 7});
    const Tensor bt = random_tensor(rng, {2, 7, 4});
    const Tensor gain = random_tensor(rng, {7}, 0.5, 1.5);
    const Tensor bias = random_tensor(rng, {7});
    const Tensor table = random_tensor(rng, {6, 4});

    check_gradients([](auto& v) { return matmul(v[0], v[1]); }, {a, w});
    check_gradients([](auto& v) { return matmul(v[0], v[1]); }, {t3, w});
    check_gradients([](auto& v) { return matmul(v[0], v[1]); }, {t3, bt});
    check_gradients([](auto& v) { return softmax(v[0]); }, {a});
    check_gradients([](auto& v) { return softmax(v[0] * 4.0); }, {t3});
    check_gradients([](auto& v) { return layer_norm(v[0], v[1], v[2]); }, {a, gain, bias});
    check_gradients([](auto& v) { return layer_norm(v[0], v[1], v[2]); }, {t3, gain, bias});
    const std::vector<int> ids{0, 3, 3, 5, 1, 0};
    check_gradients([&](auto& v) { return embedding(v[0], ids, {2, 3}); }, {table});
    check_gradients([&](auto& v) { return scatter_rows(v[0], ids, 8); }, {random_tensor(rng, {6, 4})});
}

TEST_CASE("second-order gradients match differences of first-order gradients") {
    Rng rng(4);
    const Tensor x0 = random_tensor(rng, {3, 5});
    const Tensor w = random_tensor(rng, {5, 4});
    const Tensor gain = random_tensor(rng, {4}, 0.5, 1.5);
    const Tensor bias = random_tensor(rng, {4});
    const Tensor dir = random_tensor(rng, {3, 5});

    // A composite covering matmul, gelu, layer_norm, softmax, division and log.
    auto f = [&](const Var& x) {
        const Var h = gelu(matmul(x, Var(w)));
        const Var n = layer_norm(h, Var(gain), Var(bias));
        const Var p = softmax(n * 2.0);
        return sum(log(p + 0.1) * sin(n)) + sum(exp(x) / (square(x) + 1.0));
    };
    // Directional derivative of the gradient: d/dx <grad f(x), dir>.
    auto first = [&](const Tensor& xt) {
        const Var x(xt, true);
        return grad(f(x), {x})[0].value();
    };
    const Var x(x0, true);
    const Var g = grad(f(x), {x}, {}, true)[0];
    REQUIRE(g.requires_grad());
    const Var hv = grad(sum(g * Var(dir)), {x})[0];

    const double h = 1e-5;
    for (std::size_t i = 0; i < x0.size(); ++i) {
        Tensor p = x0, m = x0;
        p.data[i] += h;
        m.data[i] -= h;
        const Tensor gp = first(p), gm = first(m);
        double fd = 0.0;
        for (std::size_t j = 0; j < dir.size(); ++j) fd += dir.data[j] * (gp.data[j] - gm.data[j]) / (2.0 * h);
        INFO("entry " << i);
        CHECK(std::abs(hv.value().data[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("closed-form gradients") {
    Rng rng(5);
    SUBCASE("sum gives ones") {
        const Var x(random_tensor(rng, {5, 7}), true);
        backward(sum(x));
        CHECK(max_abs_diff(x.grad().value(), Tensor::ones({5, 7})) == 0.0);
    }
    SUBCASE("half squared norm of Wx") {
        const Tensor wt = random_tensor(rng, {4, 6});
        const Tensor xt = random_tensor(rng, {6, 1});
        const Var W(wt, true), x(xt);
        const Var y = matmul(W, x);
        backward(sum(square(y)) * 0.5);
        Tensor expect({4, 6});
        for (std::size_t i = 0; i < 4; ++i) {
            double yi = 0.0;
            for (std::size_t k = 0; k < 6; ++k) yi += wt.data[i * 6 + k] * xt.data[k];
            for (std::size_t j = 0; j < 6; ++j) expect.data[i * 6 + j] = yi * xt.data[j];
        }
        CHECK(max_abs_diff(W.grad().value(), expect) < 1e-14);
    }
    SUBCASE("identity matmul and softmax rows") {
        const Tensor at = random_tensor(rng, {5, 7});
        CHECK(max_abs_diff(matmul(Var(Tensor::eye(5)), Var(at)).value(), at) == 0.0);
        const Var s = softmax(Var(random_tensor(rng, {4, 9}, -30.0, 30.0)));
        for (std::size_t r = 0; r < 4; ++r) {
            double acc = 0.0;
            for (std::size_t c = 0; c < 9; ++c) acc += s.value().data[r * 9 + c];
            CHECK(acc == doctest::Approx(1.0).epsilon(1e-14));
        }
    }
    SUBCASE("shared subexpressions accumulate") {
        const Var x(Tensor::scalar(3.0), true);
        backward(x * x + x);
        CHECK(x.grad().item() == doctest::Approx(7.0));
    }
}

TEST_CASE("graph misuse raises GraphError") {
    const Var x(Tensor({3}, {1.0, 2.0, 3.0}), true);
    const Var loss = sum(square(x));
    backward(loss);
    CHECK_THROWS_AS(backward(loss), GraphError);
    CHECK_THROWS_AS(backward(sum(x)), GraphError);  // leaf still holds a gradient
    Var(x.node()).zero_grad();
    CHECK_NOTHROW(backward(sum(x)));

    CHECK_THROWS_AS(backward(sum(Var(Tensor({2}, {1.0, 2.0})))), GraphError);
    const Var y(Tensor({2}, {1.0, 2.0}), true);
    CHECK_THROWS_AS(backward(y * 2.0), GraphError);
    CHECK_THROWS_AS(backward(Var()), GraphError);
    CHECK_THROWS_AS(Var().value(), GraphError);
    CHECK_THROWS_AS((y * 2.0).leaf_value(), GraphError);

    Var z(Tensor({2}, {1.0, 2.0}), true);
    {
        NoGradGuard off;
        const Var q = square(z);
        CHECK_FALSE(q.requires_grad());
        CHECK_THROWS_AS(backward(sum(q)), GraphError);
    }
    CHECK(grad_enabled());
}

TEST_CASE("shape mismatches raise DimensionError") {
    const Var a(Tensor({5, 7}));
    CHECK_THROWS_AS(a + Var(Tensor({5, 6})), DimensionError);
    CHECK_THROWS_AS(matmul(a, Var(Tensor({5, 7}))), DimensionError);
    CHECK_THROWS_AS(reshape(a, {6, 6}), DimensionError);
    CHECK_THROWS_AS(layer_norm(a, Var(Tensor({6})), Var(Tensor({6}))), DimensionError);
    CHECK_THROWS_AS(embedding(Var(Tensor({4, 3})), {1, 2}, {3}), DimensionError);
}

TEST_CASE("grad() leaves stored gradients alone and zero-fills unrelated inputs") {
    const Var x(Tensor({2}, {1.0, -2.0}), true);
    const Var u(Tensor({2}, {4.0, 5.0}), true);
    const auto gs = grad(sum(x * x * x), {x, u});
    CHECK(gs[0].value().data[0] == doctest::Approx(3.0));
    CHECK(gs[1].value().data[1] == 0.0);
    CHECK_FALSE(x.grad().defined());
}

namespace {

/// Plain reference for decoupled-decay Adam with bias correction, warmup and
/// cosine decay, and global-norm clipping.
struct ReferenceAdamW {
    double lr, wd, b1, b2, eps, clip;
    long total, warmup;
    std::vector<double> m, v;
    long t = 0;

    double rate(long s) const {
        if (s < warmup) return lr * s / warmup;
        const double p = std::min(1.0, double(s - warmup) / double(total - warmup));
        return lr * 0.5 * (1.0 + std::cos(M_PI * p));
    }

    void step(std::vector<double>& th, std::vector<double> g) {
        double n = 0.0;
        for (double x : g) n += x * x;
        n = std::sqrt(n);
        if (n > clip)
            for (auto& x : g) x *= clip / n;
        const double a = rate(t);
        ++t;
        if (m.empty()) m.assign(th.size(), 0.0), v.assign(th.size(), 0.0);
        for (std::size_t i = 0; i < th.size(); ++i) {
            th[i] *= 1.0 - a * wd;
            m[i] = b1 * m[i] + (1 - b1) * g[i];
            v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
            th[i] -= a * (m[i] / (1 - std::pow(b1, t))) / (std::sqrt(v[i] / (1 - std::pow(b2, t))) + eps);
        }
    }
};

}  // namespace

TEST_CASE("AdamW matches a reference implementation on a quadratic") {
    Rng rng(6);
    const Tensor A = random_tensor(rng, {6, 4});
    const Tensor b = random_tensor(rng, {6, 1});
    const Tensor x0 = random_tensor(rng, {4, 1});

    ParamStore ps;
    ps.add("x", x0);
    AdamWConfig cfg;
    cfg.lr = 0.05;
    cfg.weight_decay = 0.01;
    cfg.clip = 1.0;
    AdamW opt(cfg, Schedule{100, 10, 0.0});
    ReferenceAdamW ref{0.05, 0.01, 0.9, 0.999, 1e-8, 1.0, 100, 10, {}, {}};
    std::vector<double> th = x0.data;

    for (int s = 0; s < 100; ++s) {
        ps.zero_grad();
        const Var r = matmul(Var(A), ps.get("x")) - Var(b);
        backward(sum(square(r)) * 0.5);
        // gradient A^T (A th - b) from the reference iterate
        std::vector<double> res(6, 0.0), g(4, 0.0);
        for (int i = 0; i < 6; ++i) {
            for (int k = 0; k < 4; ++k) res[i] += A.data[i * 4 + k] * th[k];
            res[i] -= b.data[i];
        }
        for (int k = 0; k < 4; ++k)
            for (int i = 0; i < 6; ++i) g[k] += A.data[i * 4 + k] * res[i];
        const auto st = opt.step(ps);
        if (s == 0) CHECK(st.lr == 0.0);
        ref.step(th, g);
        for (int k = 0; k < 4; ++k) REQUIRE(ps.get("x").value().data[k] == doctest::Approx(th[k]).epsilon(1e-10));
    }
    CHECK(opt.steps() == 100);
}

TEST_CASE("optimizer edge cases") {
    Rng rng(7);
    SUBCASE("zero gradient and zero decay leave parameters unchanged") {
        ParamStore ps;
        const Tensor init = random_tensor(rng, {3, 3});
        ps.add("w", init);
        const auto before = ps.clone();
        AdamWConfig cfg;
        cfg.weight_decay = 0.0;
        AdamW opt(cfg);
        for (int s = 0; s < 5; ++s) {
            ps.zero_grad();
            backward(sum(ps.get("w")) * 0.0);
            opt.step(ps);
        }
        CHECK(ps.identical(before));
    }
    SUBCASE("schedule") {
        const Schedule s = Schedule::cosine(100, 0.1);
        CHECK(s.warmup_steps == 10);
        CHECK(s.lr(0, 1.0) == 0.0);
        CHECK(s.lr(5, 1.0) == doctest::Approx(0.5));
        CHECK(s.lr(10, 1.0) == doctest::Approx(1.0));
        CHECK(s.lr(55, 1.0) == doctest::Approx(0.5));
        CHECK(s.lr(100, 1.0) == doctest::Approx(0.0));
        CHECK(Schedule{}.lr(17, 0.3) == 0.3);
    }
    SUBCASE("sgd equals AdamW without moments") {
        ParamStore a, b;
        const Tensor init = random_tensor(rng, {4});
        a.add("w", init);
        b.add("w", init);
        AdamWConfig cfg;
        cfg.lr = 0.1;
        cfg.weight_decay = 0.0;
        cfg.clip = 0.0;
        cfg.use_moments = false;
        AdamW opt(cfg);
        for (int s = 0; s < 10; ++s) {
            a.zero_grad();
            b.zero_grad();
            backward(sum(sin(a.get("w")) * a.get("w")));
            backward(sum(sin(b.get("w")) * b.get("w")));
            opt.step(a);
            sgd_step(b, 0.1);
            REQUIRE(a.identical(b));
        }
        const Tensor p({2}, {1.0, 2.0}), g({2}, {0.5, -1.0});
        CHECK(sgd(p, g, 0.2).data == std::vector<double>{0.9, 2.2});
    }
    SUBCASE("clipping bounds the global norm") {
        ParamStore ps;
        ps.add("a", random_tensor(rng, {5}, -10, 10));
        ps.add("b", random_tensor(rng, {2, 2}, -10, 10));
        backward(sum(square(ps.get("a"))) + sum(square(ps.get("b"))));
        const double before = clip_grad_norm(ps, 1.0);
        CHECK(before > 1.0);
        CHECK(grad_norm(ps) <= 1.0 + 1e-12);
    }
    SUBCASE("frozen parameters are skipped") {
        ParamStore ps;
        ps.add("a", Tensor({2}, {1.0, 2.0}));
        ps.add("b", Tensor({2}, {3.0, 4.0}), false);
        const auto before = ps.get("b").value().data;
        backward(sum(ps.get("a") * ps.get("b")));
        CHECK_FALSE(ps.get("b").grad().defined());
        AdamW opt;
        opt.step(ps);
        CHECK(ps.get("b").value().data == before);
        CHECK(ps.count() == 4);
        CHECK(ps.count(true) == 2);
    }
    SUBCASE("non-finite gradient names the parameter") {
        ParamStore ps;
        ps.add("bad_weight", Tensor({1}, {0.0}));
        backward(sum(log(ps.get("bad_weight"))));
        AdamW opt;
        try {
            opt.step(ps);
            FAIL("expected NumericError");
        } catch (const NumericError& e) {
            CHECK(std::string(e.what()).find("bad_weight") != std::string::npos);
        }
    }
    SUBCASE("duplicate and unknown names") {
        ParamStore ps;
        ps.add("w", Tensor({1}));
        CHECK_THROWS_AS(ps.add("w", Tensor({1})), ConfigError);
        CHECK_THROWS_AS(ps.get("nope"), ConfigError);
        CHECK_THROWS_AS(ps.remove("nope"), ConfigError);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    Rng rng(8);
    ParamStore ps;
    ps.add("enc.w", random_tensor(rng, {3, 4}));
    ps.add("enc.b", Tensor({4}, {0.1, -0.0, 1e-300, 3.0}), false);
    ps.add("scalar", Tensor::scalar(M_PI));
    const auto dir = std::filesystem::temp_directory_path() / "lemon_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(ps, dir, R"({"step": 12, "tag": "x"})");

    std::string extra;
    const auto back = load_checkpoint(dir, &extra);
    CHECK(back.identical(ps));
    CHECK(extra.find("\"step\":12") != std::string::npos);
    CHECK(std::signbit(back.get("enc.b").value().data[1]));

    CHECK_THROWS_AS(save_checkpoint(ps, dir, "{not json"), ConfigError);

    // Truncated blob.
    std::filesystem::resize_file(dir / "params.bin", 16);
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
    save_checkpoint(ps, dir);
    // Version mismatch.
    {
        std::ifstream in(dir / "manifest.json");
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const auto pos = text.find("\"version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 12, "\"version\": 9");
        std::ofstream(dir / "manifest.json") << text;
    }
    CHECK_THROWS_AS(load_checkpoint(dir), DataError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing"), DataError);
    std::filesystem::remove_all(dir);
}
