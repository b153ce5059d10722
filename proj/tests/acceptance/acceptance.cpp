// Acceptance runner: one PASS/FAIL line per criterion. Arguments select a
// subset (e.g. `lemon_acceptance 1 4 7`); the exit status is the number of
// failing criteria.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "lemon/adapters/lora.hpp"
#include "lemon/autodiff/optim.hpp"
#include "lemon/cli/cli.hpp"
#include "lemon/common/error.hpp"
#include "lemon/common/rng.hpp"
#include "lemon/eval/protocol.hpp"
#include "lemon/exprtree/polish.hpp"
#include "lemon/pdelab/family.hpp"
#include "lemon/pdelab/ic.hpp"
#include "lemon/pdelab/solver.hpp"
#include "lemon/prose/model.hpp"
#include "lemon/train/paml.hpp"
#include "lemon/train/toy.hpp"

using namespace lemon;
using ad::Tensor;
using ad::Var;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string sci(double v) {
    std::ostringstream s;
    s << std::setprecision(2) << std::scientific << v;
    return s.str();
}

double rel_l2(std::span<const double> a, std::span<const double> b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return std::sqrt(num / den);
}

double total(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

pdelab::Grid grid_n(int n) {
    pdelab::Grid g;
    g.n_x = n;
    return g;
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("lemon_acceptance_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------- 1

void solver_analytics(Verdict& v) {
    const auto g = grid_n(128);
    const auto times = g.frame_times();
    auto band = [](double y) { return 0.7 * std::sin(2 * kPi * y + 0.3) + 0.2 * std::sin(4 * kPi * y + 1.1); };
    std::vector<double> u0;
    for (double x : g.x()) u0.push_back(band(x));

    Stopwatch t_ad;
    const double a = 0.5;
    const auto ad = pdelab::solve(pdelab::family("AD"), std::vector<double>{a}, u0, g);
    const double s_ad = t_ad.seconds();
    double e_ad = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i)
        for (int j = 0; j < g.n_x; ++j) e_ad = std::max(e_ad, std::abs(ad(i, j) - band(j / 128.0 - a * times[i])));

    Stopwatch t_df;
    const double q = 3e-3;
    std::vector<double> s0;
    for (double x : g.x()) s0.push_back(std::sin(2 * kPi * x));
    const auto df = pdelab::solve(pdelab::family("DF"), std::vector<double>{q}, s0, g);
    const double s_df = t_df.seconds();
    double e_df = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<double> exact;
        for (double v0 : s0) exact.push_back(v0 * std::exp(-q * 4 * kPi * kPi * times[i]));
        e_df = std::max(e_df, rel_l2(df.row(i), exact));
    }

    Stopwatch t_wv;
    const double qw = 0.37, c = std::sqrt(qw);
    const auto wv = pdelab::solve(pdelab::family("WV"), std::vector<double>{qw}, u0, g);
    const double s_wv = t_wv.seconds();
    double e_wv = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (int j = 0; j < g.n_x; ++j) {
            const double x = j / 128.0;
            e_wv = std::max(e_wv, std::abs(wv(i, j) - 0.5 * (band(x - c * times[i]) + band(x + c * times[i]))));
        }
    }
    v.detail << "AD max " << sci(e_ad) << ", DF rel " << sci(e_df) << ", WV max " << sci(e_wv) << ", slowest "
             << std::max({s_ad, s_df, s_wv}) << " s";
    v.require(e_ad <= 1e-10, "AD exact translation");
    v.require(e_df <= 1e-3, "DF analytic decay");
    v.require(e_wv <= 1e-8, "WV d'Alembert");
    v.require(std::max({s_ad, s_df, s_wv}) <= 1.0, "runtime per trajectory");
}

// ---------------------------------------------------------------- 2

void conservation(Verdict& v) {
    const auto g = grid_n(128);
    std::vector<double> u0;
    for (double x : g.x()) u0.push_back(0.5 + 0.4 * std::sin(2 * kPi * x) + 0.2 * std::cos(4 * kPi * x));
    double worst_law = 0.0;
    for (const char* id : {"InB", "InSin", "InCos", "InCub", "B", "SinF", "Cos", "CC"}) {
        const auto& fam = pdelab::family(id);
        const auto gr = fam.resolve(g);
        const auto tr = pdelab::solve(fam, fam.canonical(), u0, gr);
        const double m0 = total(u0) * gr.dx();
        for (std::size_t i = 0; i < tr.rows; ++i) {
            worst_law = std::max(worst_law, std::abs(total(tr.row(i)) * gr.dx() - m0) / gr.T);
        }
    }

    const auto& pm = pdelab::family("PM");
    pdelab::ICSpec s;
    s.kind = pdelab::ICSpec::Kind::Gaussian;
    s.bumps = {{1.0, 0.5, 0.1}};
    const auto gp = pm.resolve(g);
    const auto p0 = pdelab::normalize(pdelab::periodize(pdelab::ic_gaussian(s, gp)), pm.normalization);
    double worst_pm = 0.0;
    for (double m : {2.0, 3.0, 4.0}) {
        const auto tr = pdelab::solve(pm, std::vector<double>{m}, p0, gp);
        for (std::size_t i = 0; i < tr.rows; ++i) {
            worst_pm = std::max(worst_pm, std::abs(total(tr.row(i)) - total(p0)) * gp.dx() / gp.T);
        }
    }

    const auto& fp = pdelab::family("FP");
    const auto gf = fp.resolve(g);
    pdelab::ICSpec sf;
    sf.kind = pdelab::ICSpec::Kind::Gaussian;
    sf.bumps = {{1.0, kPi, 0.5}};
    const auto f0 = pdelab::normalize(pdelab::ic_gaussian(sf, gf), fp.normalization);
    const auto tf = pdelab::solve(fp, fp.canonical(), f0, gf);
    double worst_fp = 0.0;
    for (std::size_t i = 0; i < tf.rows; ++i) worst_fp = std::max(worst_fp, std::abs(total(tf.row(i)) - 1.0));

    v.detail << "laws " << sci(worst_law) << ", PM " << sci(worst_pm) << ", FP sum " << sci(worst_fp);
    v.require(worst_law <= 1e-10, "conservation-law mass");
    v.require(worst_pm <= 1e-8, "PM mass");
    v.require(worst_fp <= 1e-8, "FP probability");
}

// ---------------------------------------------------------------- 3

void burgers_oracle(Verdict& v) {
    Stopwatch t;
    const auto& b = pdelab::family("B");
    const std::vector<double> times{0.25, 0.5, 0.75, 1.0};
    auto ic = [](std::size_t n) {
        std::vector<double> u(n);
        for (std::size_t j = 0; j < n; ++j) u[j] = 0.5 + 0.5 * std::sin(2 * kPi * j / double(n));
        return u;
    };
    const auto coarse = pdelab::solve_at(b, b.canonical(), ic(128), 1.0, times, pdelab::Boundary::Periodic);
    const auto fine = pdelab::solve_at(b, b.canonical(), ic(4096), 1.0, times, pdelab::Boundary::Periodic);
    double worst = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<double> sampled(128);
        for (std::size_t j = 0; j < 128; ++j) sampled[j] = fine(i, j * 32);
        worst = std::max(worst, rel_l2(coarse.row(i), sampled));
    }
    const double s = t.seconds();
    v.detail << "max rel L2 " << worst * 100 << " % over T=1, " << s << " s";
    v.require(worst <= 0.02, "coarse vs fine");
    v.require(s <= 30.0, "runtime");
}

// ---------------------------------------------------------------- 4

expr::ExprNode random_tree(Rng& rng, int depth) {
    using expr::Kind;
    static const std::vector<std::string> leaves = {"x", "t", "u", "u_x", "u_xx", "u_t", "x1", "u_x2"};
    if (depth <= 1 || rng.bernoulli(0.3)) {
        if (rng.uniform_int(0, 2) == 0) {
            const double mag = std::pow(10.0, rng.uniform(-6.0, 6.0));
            return expr::c(rng.bernoulli(0.5) ? mag : -mag);
        }
        const auto& name = leaves[static_cast<std::size_t>(rng.uniform_int(0, 7))];
        return (name[0] == 'u' && name.size() > 1) ? expr::d(name) : expr::var(name);
    }
    static const std::vector<Kind> unary = {Kind::Sin, Kind::Cos, Kind::Exp, Kind::Abs, Kind::Neg};
    static const std::vector<Kind> binary = {Kind::Add, Kind::Sub, Kind::Mul, Kind::Div, Kind::Pow};
    if (rng.bernoulli(0.4)) {
        return expr::ExprNode::unary(unary[static_cast<std::size_t>(rng.uniform_int(0, 4))], random_tree(rng, depth - 1));
    }
    auto lhs = random_tree(rng, depth - 1);
    auto rhs = random_tree(rng, depth - 1);
    return expr::ExprNode::binary(binary[static_cast<std::size_t>(rng.uniform_int(0, 4))], lhs, rhs);
}

void symbolic_round_trip(Verdict& v) {
    Rng rng(777);
    int ok = 0;
    for (int i = 0; i < 1000; ++i) {
        const auto tree = expr::quantize_constants(random_tree(rng, 6));
        ok += expr::from_polish(expr::to_polish(tree)) == tree;
    }
    int fam_ok = 0, fam_n = 0;
    for (const auto& fam : pdelab::registry()) {
        ++fam_n;
        const auto tree = expr::quantize_constants(pdelab::family_to_tree(fam, fam.canonical()));
        const auto seq = expr::to_polish(tree);
        fam_ok += expr::from_polish(seq) == tree && expr::to_polish(expr::from_polish(seq)) == seq;
    }
    v.detail << "random " << ok << "/1000, registry " << fam_ok << "/" << fam_n;
    v.require(ok == 1000, "random trees");
    v.require(fam_ok == fam_n, "family templates");
}

// ---------------------------------------------------------------- 5

using Fn = std::function<Var(const std::vector<Var>&)>;

Tensor random_tensor(Rng& rng, ad::Shape s, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

/// Worst |analytic - central difference| / max(1, |fd|) over every input entry.
double fd_error(const Fn& f, const std::vector<Tensor>& xs) {
    const double h = 1e-5;
    Rng rng(99);
    auto probe = [&](const std::vector<Tensor>& in, const Tensor& w) {
        ad::NoGradGuard off;
        std::vector<Var> vs(in.begin(), in.end());
        const Var y = f(vs);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y.value().data[i] * w.data[i];
        return s;
    };
    ad::Shape shape;
    {
        ad::NoGradGuard off;
        std::vector<Var> vs(xs.begin(), xs.end());
        shape = f(vs).shape();
    }
    const Tensor w = random_tensor(rng, shape, 0.5, 1.5);
    std::vector<Var> leaves;
    for (const auto& x : xs) leaves.emplace_back(x, true);
    ad::backward(ad::sum(f(leaves) * Var(w)));
    double worst = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const Tensor g = leaves[k].grad().value();
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            auto plus = xs, minus = xs;
            plus[k].data[i] += h;
            minus[k].data[i] -= h;
            const double fd = (probe(plus, w) - probe(minus, w)) / (2 * h);
            worst = std::max(worst, std::abs(g.data[i] - fd) / std::max(1.0, std::abs(fd)));
        }
    }
    return worst;
}

prose::ProseConfig tiny_prose(int vocab) {
    prose::ProseConfig c;
    c.d_model = 8;
    c.n_heads = 2;
    c.layers = {1, 1, 1, 1};
    c.ffn_hidden = 12;
    c.vocab_size = vocab;
    c.max_symbols = 12;
    c.n_x = 6;
    c.n_t_in = 3;
    c.n_t_out = 4;
    return c;
}

prose::Batch random_batch(const prose::ProseConfig& c, const std::vector<std::size_t>& lengths, std::uint64_t seed) {
    Rng rng(seed);
    prose::Batch b;
    b.size = lengths.size();
    b.inputs = Tensor({b.size, std::size_t(c.n_t_in), std::size_t(c.n_x)});
    b.targets = Tensor({b.size, std::size_t(c.n_t_out), std::size_t(c.n_x)});
    for (auto& x : b.inputs.data) x = rng.uniform(-1, 1);
    for (auto& x : b.targets.data) x = rng.uniform(-1, 1);
    b.max_len = *std::max_element(lengths.begin(), lengths.end());
    b.symbols.assign(b.size * b.max_len, 0);
    b.padding.assign(b.size * b.max_len, 1);
    for (std::size_t k = 0; k < b.size; ++k) {
        for (std::size_t j = 0; j < lengths[k]; ++j) {
            b.symbols[k * b.max_len + j] = static_cast<int>(rng.uniform_int(3, c.vocab_size - 1));
            b.padding[k * b.max_len + j] = 0;
        }
    }
    for (int j = 0; j < c.n_t_out; ++j) b.tau.push_back(0.4 + 0.6 * (j + 1) / c.n_t_out);
    return b;
}

void gradient_checks(Verdict& v) {
    Stopwatch t;
    Rng rng(5);
    const Tensor a = random_tensor(rng, {5, 7}), b = random_tensor(rng, {5, 7});
    const Tensor pos = random_tensor(rng, {5, 7}, 0.5, 2.0), row = random_tensor(rng, {7});
    const Tensor t3 = random_tensor(rng, {2, 5, 7}), c3 = random_tensor(rng, {3, 7});
    const Tensor w = random_tensor(rng, {7, 3}), bt = random_tensor(rng, {2, 7, 4});
    const Tensor gain = random_tensor(rng, {7}, 0.5, 1.5), bias = random_tensor(rng, {7});
    const Tensor table = random_tensor(rng, {6, 4}), rows = random_tensor(rng, {6, 4});
    Tensor away = a;
    for (auto& x : away.data) x = x >= 0 ? x + 0.1 : x - 0.1;
    const std::vector<int> ids{0, 3, 3, 5, 1, 0};

    const std::vector<std::pair<std::string, std::pair<Fn, std::vector<Tensor>>>> ops = {
        {"add", {[](auto& x) { return x[0] + x[1]; }, {a, row}}},
        {"sub", {[](auto& x) { return x[0] - x[1]; }, {a, b}}},
        {"mul", {[](auto& x) { return x[0] * x[1]; }, {a, b}}},
        {"div", {[](auto& x) { return x[0] / x[1]; }, {a, pos}}},
        {"neg", {[](auto& x) { return -x[0]; }, {a}}},
        {"scalar", {[](auto& x) { return 1.0 - 2.5 * x[0] / 3.0; }, {a}}},
        {"exp", {[](auto& x) { return exp(x[0]); }, {a}}},
        {"log", {[](auto& x) { return log(x[0]); }, {pos}}},
        {"tanh", {[](auto& x) { return tanh(x[0]); }, {a}}},
        {"sin", {[](auto& x) { return sin(x[0]); }, {a}}},
        {"cos", {[](auto& x) { return cos(x[0]); }, {a}}},
        {"sqrt", {[](auto& x) { return sqrt(x[0]); }, {pos}}},
        {"gelu", {[](auto& x) { return gelu(x[0] * 3.0); }, {a}}},
        {"relu", {[](auto& x) { return relu(x[0]); }, {away}}},
        {"square", {[](auto& x) { return square(x[0]); }, {a}}},
        {"pow", {[](auto& x) { return pow(x[0], 2.5); }, {pos}}},
        {"reshape", {[](auto& x) { return reshape(x[0], {7, 5}); }, {a}}},
        {"transpose", {[](auto& x) { return transpose(x[0]); }, {a}}},
        {"permute", {[](auto& x) { return permute(x[0], {2, 0, 1}); }, {t3}}},
        {"broadcast_to", {[](auto& x) { return broadcast_to(x[0], {2, 5, 7}); }, {a}}},
        {"sum_to", {[](auto& x) { return sum_to(x[0], {5, 1}); }, {t3}}},
        {"slice", {[](auto& x) { return slice(x[0], 1, 2, 3); }, {a}}},
        {"pad", {[](auto& x) { return pad(x[0], 0, 1, 2); }, {a}}},
        {"concat", {[](auto& x) { return ad::concat({x[0], x[1]}, 0); }, {a, c3}}},
        {"sum", {[](auto& x) { return sum(x[0], 1, true); }, {t3}}},
        {"mean", {[](auto& x) { return mean(x[0], 2); }, {t3}}},
        {"matmul", {[](auto& x) { return matmul(x[0], x[1]); }, {t3, w}}},
        {"bmm", {[](auto& x) { return matmul(x[0], x[1]); }, {t3, bt}}},
        {"softmax", {[](auto& x) { return softmax(x[0] * 4.0); }, {t3}}},
        {"layer_norm", {[](auto& x) { return layer_norm(x[0], x[1], x[2]); }, {t3, gain, bias}}},
        {"embedding", {[&](auto& x) { return embedding(x[0], ids, {2, 3}); }, {table}}},
        {"scatter_rows", {[&](auto& x) { return scatter_rows(x[0], ids, 8); }, {rows}}},
    };
    double worst_op = 0.0;
    std::string worst_name;
    for (const auto& [name, op] : ops) {
        const double e = fd_error(op.first, op.second);
        if (e > worst_op) {
            worst_op = e;
            worst_name = name;
        }
    }

    // Full PROSE-lite forward pass.
    const auto c = tiny_prose(20);
    auto ps = prose::init_params(c, 13);
    Rng jitter(14);
    for (auto& p : ps.entries())
        for (auto& x : p.var.leaf_value().data) x += jitter.uniform(-0.1, 0.1);
    const auto batch = random_batch(c, {6, 4}, 15);
    auto loss = [&] {
        ad::NoGradGuard off;
        return prose::rel_sq_error(prose::forward(c, ad::Weights::bind(ps), batch), batch.targets).item();
    };
    ad::backward(prose::rel_sq_error(prose::forward(c, ad::Weights::bind(ps), batch), batch.targets));
    double worst_model = 0.0;
    for (auto& p : ps.entries()) {
        const Tensor g = p.var.grad().value();
        auto& data = p.var.leaf_value().data;
        for (std::size_t s = 0; s < std::min<std::size_t>(data.size(), 4); ++s) {
            const std::size_t i = (s * 7919 + 3) % data.size();
            const double keep = data[i];
            data[i] = keep + 1e-5;
            const double fp = loss();
            data[i] = keep - 1e-5;
            const double fm = loss();
            data[i] = keep;
            const double fd = (fp - fm) / 2e-5;
            worst_model = std::max(worst_model, std::abs(g.data[i] - fd) / (std::abs(fd) + 1e-5));
        }
    }
    const double s = t.seconds();
    v.detail << ops.size() << " ops worst " << sci(worst_op) << " (" << worst_name << "), model worst "
             << sci(worst_model) << ", " << s << " s";
    v.require(worst_op <= 1e-6, "op gradients");
    v.require(worst_model <= 1e-4, "model gradient");
    v.require(s <= 60.0, "runtime");
}

// ---------------------------------------------------------------- 6

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

void lora_contracts(Verdict& v) {
    const auto c = tiny_prose(20);
    const auto base = prose::init_params(c, 1);
    const auto targets = prose::attention_weight_names(c);
    auto adapted = lora::attach(base, targets, 2, 5.0, 7);
    auto eval = [&](const ad::Weights& w, std::uint64_t seed) {
        ad::NoGradGuard off;
        return prose::forward(c, w, random_batch(c, {5, 5, 5}, seed)).value();
    };
    const bool exact_init = eval(adapted.weights(), 2).data == eval(ad::Weights::bind(base), 2).data;

    ad::AdamWConfig oc;
    oc.lr = 1e-2;
    oc.weight_decay = 1e-2;
    ad::AdamW opt(oc);
    for (int s = 0; s < 100; ++s) {
        const auto b = random_batch(c, {5, 5}, 100 + s);
        adapted.params.zero_grad();
        ad::backward(prose::rel_sq_error(prose::forward(c, adapted.weights(), b), b.targets));
        opt.step(adapted.params);
    }
    bool frozen = true;
    for (const auto& p : base.entries()) frozen &= adapted.params.get(p.name).value().data == p.var.value().data;

    const auto merged = lora::merge(adapted);
    double merge_gap = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) {
        merge_gap = std::max(merge_gap, max_abs_diff(eval(adapted.weights(), 50 + s), eval(ad::Weights::bind(merged), 50 + s)));
    }
    const bool moved = max_abs_diff(eval(adapted.weights(), 9), eval(ad::Weights::bind(base), 9)) > 0.0;

    prose::ProseConfig dflt;
    dflt.vocab_size = 100;
    const auto big = prose::init_params(dflt, 1);
    const auto big_adapted = lora::attach(big, prose::attention_weight_names(dflt), 8, 1.0, 2);
    const auto lora_count = big_adapted.params.count(true);
    const auto full_count = big.count(true);

    v.detail << "init exact " << exact_init << ", merge gap " << sci(merge_gap) << ", base frozen " << frozen
             << ", trainable " << lora_count << " vs " << full_count;
    v.require(exact_init, "attach is the identity");
    v.require(moved && merge_gap <= 1e-10, "merged equals adapted");
    v.require(frozen, "frozen base");
    v.require(lora_count < full_count, "trainable count");
}

// ---------------------------------------------------------------- 7

struct QuadTask {
    double s[2], a[2], b, r[2], c[2];
};

const std::vector<QuadTask> kQuad{{{1.0, 0.5}, {0.3, -0.2}, 0.4, {0.7, 1.3}, {1.0, -0.5}},
                                  {{0.8, 1.5}, {-0.6, 0.9}, -0.3, {1.1, 0.4}, {-0.2, 0.8}},
                                  {{1.2, 0.9}, {0.1, 0.4}, 0.25, {0.5, 0.9}, {0.6, 0.3}}};

double quad_meta_objective(double t0, double t1, int p, double eta) {
    double f = 0.0;
    for (const auto& t : kQuad) {
        double x = t0, y = t1;
        for (int j = 0; j < p; ++j) {
            const double gx = 2 * t.s[0] * (x - t.a[0]) + t.b * y;
            const double gy = 2 * t.s[1] * (y - t.a[1]) + t.b * x;
            x -= eta * gx;
            y -= eta * gy;
        }
        f += t.r[0] * (x - t.c[0]) * (x - t.c[0]) + t.r[1] * (y - t.c[1]) * (y - t.c[1]);
    }
    return f;
}

void paml_correctness(Verdict& v) {
    // p = 0 against pooled query gradients and one SGD step.
    pdelab::Grid g;
    g.n_x = 32;
    g.n_t_in = 4;
    g.n_t_out = 4;
    auto spec = train::ModelSpec::for_grid(train::ModelKind::Prose, g);
    spec.prose.d_model = 16;
    spec.prose.n_heads = 2;
    spec.prose.layers = {1, 1, 1, 1};
    spec.prose.ffn_hidden = 32;
    const auto theta0 = spec.init(6);
    Rng rng(3);
    std::vector<train::Episode> eps;
    for (const char* id : {"DF", "AD", "DL"}) {
        const auto pool = pdelab::sample_dataset(pdelab::family(id), 10, 4, 11, g);
        eps.push_back(train::make_episode(spec, pool, train::sample_episode(pool, 10, 20, rng)));
    }
    auto oracle = theta0.clone();
    std::vector<Tensor> acc;
    for (const auto& p : oracle.entries()) acc.emplace_back(p.var.shape());
    for (const auto& e : eps) {
        oracle.zero_grad();
        ad::backward(e.query(ad::Weights::bind(oracle)));
        for (std::size_t k = 0; k < acc.size(); ++k) {
            const auto gk = oracle.entries()[k].var.grad();
            if (!gk.defined()) continue;
            for (std::size_t i = 0; i < acc[k].size(); ++i) acc[k].data[i] += gk.value().data[i];
        }
    }
    for (std::size_t k = 0; k < acc.size(); ++k) {
        auto& val = oracle.entries()[k].var.leaf_value();
        for (std::size_t i = 0; i < val.size(); ++i) val.data[i] -= 0.05 * acc[k].data[i];
    }
    train::PamlConfig cfg;
    cfg.inner_steps = 0;
    cfg.meta_lr = 0.05;
    cfg.order = train::PamlOrder::First;
    auto theta = theta0.clone();
    train::paml_step(theta, eps, cfg);
    const bool pooled = theta.identical(oracle);

    // Second order against central differences of the unrolled objective.
    ad::ParamStore q;
    q.add("theta", Tensor({2}, {0.35, -0.8}));
    std::vector<train::Episode> quad;
    for (const auto& t : kQuad) {
        quad.push_back({"quad",
                        [t](const ad::Weights& w) {
                            const Var th = w["theta"];
                            const Var t0 = ad::slice(th, 0, 0, 1), t1 = ad::slice(th, 0, 1, 1);
                            return ad::sum(t.s[0] * ad::square(t0 - t.a[0]) + t.s[1] * ad::square(t1 - t.a[1]) +
                                           t.b * t0 * t1);
                        },
                        [t](const ad::Weights& w) {
                            const Var th = w["theta"];
                            const Var t0 = ad::slice(th, 0, 0, 1), t1 = ad::slice(th, 0, 1, 1);
                            return ad::sum(t.r[0] * ad::square(t0 - t.c[0]) + t.r[1] * ad::square(t1 - t.c[1]));
                        }});
    }
    train::PamlConfig so;
    so.order = train::PamlOrder::Second;
    so.inner_steps = 3;
    so.inner_lr = 0.1;
    const auto mg = train::paml_meta_gradient(q, quad, so);
    double worst = 0.0;
    const double th[2] = {0.35, -0.8}, h = 1e-5;
    for (int k = 0; k < 2; ++k) {
        double up[2] = {th[0], th[1]}, dn[2] = {th[0], th[1]};
        up[k] += h;
        dn[k] -= h;
        const double fd = (quad_meta_objective(up[0], up[1], 3, 0.1) - quad_meta_objective(dn[0], dn[1], 3, 0.1)) / (2 * h);
        worst = std::max(worst, std::abs(mg.grads[0].data[k] - fd) / std::abs(fd));
    }
    v.detail << "p=0 bit-identical " << pooled << ", second-order rel err " << sci(worst);
    v.require(pooled, "p=0 pooled step");
    v.require(worst <= 1e-5, "second-order meta-gradient");
}

// ---------------------------------------------------------------- 8

/// One-sided binomial tail P[X >= k], X ~ Bin(n, 1/2), in exact integers.
double sign_test_oracle(int k, int n) {
    unsigned long long tail = 0, binom = 1;
    for (int i = 0; i <= n; ++i) {
        if (i >= k) tail += binom;
        binom = binom * static_cast<unsigned long long>(n - i) / static_cast<unsigned long long>(i + 1);
    }
    return static_cast<double>(tail) / std::ldexp(1.0, n);
}

void sine_meta(Verdict& v) {
    Stopwatch t;
    const train::toy::SineExperiment cfg;
    std::vector<double> paml, plain;
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto o = train::toy::run_sine_experiment(cfg, seed);
        paml.push_back(o.paml_loss);
        plain.push_back(o.pretrain_loss);
        wins += o.paml_loss < o.pretrain_loss;
    }
    const double p = sign_test_oracle(wins, 20);
    const double s = t.seconds();
    v.detail << "median MSE after " << cfg.adapt_steps << " steps: paml " << median(paml) << " vs plain "
             << median(plain) << ", wins " << wins << "/20, sign test p " << sci(p) << ", " << s << " s";
    v.require(median(paml) < median(plain), "median");
    v.require(p <= 0.05, "sign test");
    v.require(s <= 600.0, "runtime");
}

// ---------------------------------------------------------------- 9

eval::ProtocolConfig desk_grid(eval::ProtocolConfig c) {
    c.grid.n_x = 32;
    c.grid.n_t_in = 4;
    c.grid.n_t_out = 4;
    return c;
}

void ft_size_sweep(Verdict& v) {
    auto cfg = desk_grid({});
    cfg.pretrain_families = {"DF", "AD", "DL"};
    cfg.heldout_families = {"DLo"};
    cfg.pretrain.steps = 600;
    cfg.pretrain.lr = 2e-3;
    cfg.finetune.train.steps = 400;
    cfg.finetune.train.lr = 1e-3;
    cfg.ft_sizes = {20, 50, 100};
    cfg.seeds = {0, 1, 2, 3, 4};
    cfg.test_nq = 20;
    cfg.test_nu = 5;
    const auto rep = eval::run_protocol(eval::Protocol::FtSizeSweep, cfg, scratch("sweep"));
    std::map<std::size_t, std::vector<double>> by_size;
    for (const auto& r : rep.rows) {
        if (r.method == "prose") by_size[r.n_ft].push_back(r.error_pct);
    }
    std::vector<double> med;
    v.detail << "median %:";
    for (auto& [n, errs] : by_size) {
        med.push_back(median(errs));
        v.detail << " n=" << n << " " << med.back() << " (" << errs.size() << " seeds)";
    }
    v.detail << ", " << rep.wall_seconds << " s";
    bool monotone = med.size() == 3;
    for (std::size_t i = 1; i < med.size(); ++i) monotone &= med[i] <= med[i - 1];
    for (const auto& [n, errs] : by_size) monotone &= errs.size() == 5;
    v.require(monotone, "nonincreasing medians");
    v.require(rep.wall_seconds <= 3600.0, "runtime");
}

// ---------------------------------------------------------------- 10

void mol_vs_sol(Verdict& v) {
    auto cfg = desk_grid({});
    cfg.pretrain_families = {"DF", "AD"};
    cfg.heldout_families = {"DLo"};
    cfg.model.prose.d_model = 16;
    cfg.model.prose.n_heads = 2;
    cfg.model.prose.ffn_hidden = 32;
    cfg.sol.deeponet.width = 32;
    cfg.sol.deeponet.basis = 16;
    cfg.pretrain.steps = 300;
    cfg.sol_train.steps = 300;
    cfg.finetune.train.steps = 100;
    cfg.n_ft = 20;
    cfg.test_nq = 10;
    cfg.test_nu = 5;
    cfg.seeds = {0, 1};
    const auto dir = scratch("mol_vs_sol");
    const auto rep = eval::run_protocol(eval::Protocol::MolVsSol, cfg, dir);
    std::map<std::uint64_t, std::map<std::string, double>> cells;
    bool finite = true;
    for (const auto& r : rep.rows) {
        cells[r.seed][r.method] = r.error_pct;
        finite &= std::isfinite(r.error_pct) && r.n_test > 0 && !r.checkpoint.empty() && !r.test_q.empty();
    }
    bool paired = cells.size() == cfg.seeds.size();
    for (const auto& [seed, m] : cells) paired &= m.count("prose-lite") && m.count("deeponet-lite");
    const json audit = json::parse(slurp(dir / "audit.json"));
    bool trail = true;
    for (const char* f : {"config.json", "report.csv", "table.csv", "timing.json"}) trail &= fs::exists(dir / f);
    trail &= audit.dump().find("checkpoint_hash") != std::string::npos;
    std::vector<double> mol, sol;
    for (const auto& [seed, m] : cells) {
        if (m.count("prose-lite")) mol.push_back(m.at("prose-lite"));
        if (m.count("deeponet-lite")) sol.push_back(m.at("deeponet-lite"));
    }
    v.detail << rep.rows.size() << " cells";
    if (!mol.empty() && !sol.empty()) v.detail << ", median % prose-lite " << median(mol) << " vs deeponet-lite " << median(sol);
    v.detail << " (ordering reported, not gated), " << rep.wall_seconds << " s";
    v.require(paired, "paired cells");
    v.require(finite, "finite cells with provenance");
    v.require(trail, "audit trail");
    v.require(rep.wall_seconds <= 1800.0, "runtime");
}

// ---------------------------------------------------------------- 11

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "lemon");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

/// Full CLI pipeline plus a small protocol run under `root`.
bool repro_run(const fs::path& root) {
    const std::string grid = "nx=32,ntin=4,ntout=4";
    const std::vector<std::string> tiny{"--d-model", "16", "--heads", "2", "--layers", "1,1,1,1", "--ffn", "32"};
    auto with = [&](std::vector<std::string> a) {
        a.insert(a.end(), tiny.begin(), tiny.end());
        return a;
    };
    int rc = 0;
    rc |= cli({"generate", "--families", "DF,AD", "--nq", "3", "--nu", "4", "--seed", "5", "--grid", grid,
               "--threads", "1", "--out", (root / "pre").string()});
    rc |= cli({"generate", "--families", "DL", "--nq", "2", "--nu", "4", "--seed", "6", "--grid", grid, "--threads",
               "1", "--out", (root / "ft").string()});
    rc |= cli(with({"pretrain", "--data", (root / "pre").string(), "--steps", "100", "--checkpoint-every", "50",
                    "--out", (root / "run").string()}));
    rc |= cli(with({"paml-pretrain", "--data", (root / "pre").string(), "--n-ops", "2", "--support", "3", "--query",
                    "4", "--inner-steps", "1", "--outer-steps", "10", "--meta-optimizer", "adamw", "--out",
                    (root / "meta").string()}));
    rc |= cli({"finetune", "--checkpoint", (root / "run/run/checkpoints/step_100").string(), "--data",
               (root / "ft").string(), "--mode", "lora", "--steps", "30", "--out", (root / "tuned").string()});
    rc |= cli({"evaluate", "--checkpoint", (root / "tuned/final").string(), "--data", (root / "ft").string(), "--out",
               (root / "eval").string()});
    auto cfg = desk_grid({});
    cfg.pretrain_families = {"DF", "AD"};
    cfg.heldout_families = {"DL"};
    cfg.model.prose.d_model = 16;
    cfg.model.prose.n_heads = 2;
    cfg.model.prose.ffn_hidden = 32;
    cfg.pretrain_nq = 5;
    cfg.pretrain_nu = 4;
    cfg.pretrain.steps = 60;
    cfg.finetune.train.steps = 30;
    cfg.ft_sizes = {20};
    cfg.test_nq = 4;
    cfg.test_nu = 3;
    cfg.seeds = {3};
    std::ofstream(root / "sweep.json") << eval::to_json(cfg);
    rc |= cli({"protocol", "--name", "ft_size_sweep", "--settings", (root / "sweep.json").string(), "--out",
               (root / "proto").string()});
    return rc == 0;
}

void reproducibility(Verdict& v) {
    // Both runs use the same directory so path-bearing artifacts compare too.
    const auto run = scratch("repro");
    const auto first = scratch("repro_first");
    fs::remove_all(first);
    bool ran = repro_run(run);
    fs::rename(run, first);
    ran = repro_run(run) && ran;
    std::size_t compared = 0, differ = 0;
    for (const auto& e : fs::recursive_directory_iterator(first)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), first);
        if (rel.filename() == "timing.json") continue;  // wall clock
        ++compared;
        if (!fs::exists(run / rel) || slurp(e.path()) != slurp(run / rel)) {
            ++differ;
            v.detail << "differs: " << rel.string() << "; ";
        }
    }
    v.detail << compared << " artifacts compared, " << differ << " differ";
    v.require(ran, "runs exit 0");
    v.require(compared > 20 && differ == 0, "bit-identical");
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
        {"solver analytics", solver_analytics},
        {"conservation", conservation},
        {"viscous Burgers fine-grid oracle", burgers_oracle},
        {"symbolic round trip", symbolic_round_trip},
        {"gradient correctness", gradient_checks},
        {"LoRA contracts", lora_contracts},
        {"PAML correctness", paml_correctness},
        {"meta-learning sanity (sine)", sine_meta},
        {"ft_size_sweep trend", ft_size_sweep},
        {"MOL vs SOL smoke", mol_vs_sol},
        {"reproducibility", reproducibility},
    };
    std::vector<int> pick;
    for (int i = 1; i < argc; ++i) pick.push_back(std::stoi(argv[i]));
    if (pick.empty())
        for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) pick.push_back(i);

    int failed = 0;
    for (int k : pick) {
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::cerr << "no criterion " << k << '\n';
            return 2;
        }
        Verdict v;
        Stopwatch t;
        try {
            criteria[static_cast<std::size_t>(k - 1)].second(v);
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail << " [exception: " << e.what() << "]";
        }
        failed += !v.pass;
        std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << k << " " << criteria[static_cast<std::size_t>(k - 1)].first
                  << ": " << v.detail.str() << " (" << std::fixed << std::setprecision(1) << t.seconds() << " s)"
                  << std::defaultfloat << std::setprecision(6) << std::endl;
    }
    return failed;
}
