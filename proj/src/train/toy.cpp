#include "lemon/train/toy.hpp"

#include <cmath>
#include <numbers>

#include "lemon/autodiff/optim.hpp"
#include "lemon/common/error.hpp"

namespace lemon::train::toy {

using ad::Tensor;
using ad::Var;

double SineTask::operator()(double x) const { return amplitude * std::sin(x + phase); }

SineTask sample_sine_task(Rng& rng) {
    SineTask t;
    t.amplitude = rng.uniform(0.1, 5.0);
    t.phase = rng.uniform(0.0, std::numbers::pi);
    return t;
}

Samples sine_samples(const SineTask& task, std::size_t n, Rng& rng) {
    Samples s{Tensor({n, 1}), Tensor({n, 1})};
    for (std::size_t i = 0; i < n; ++i) {
        s.x.data[i] = rng.uniform(-5.0, 5.0);
        s.y.data[i] = task(s.x.data[i]);
    }
    return s;
}

ad::ParamStore init_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed) {
    if (widths.size() < 2) throw ConfigError("mlp: need at least input and output widths");
    ad::ParamStore ps;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Tensor w({widths[l], widths[l + 1]});
        const double bound = 1.0 / std::sqrt(static_cast<double>(widths[l]));
        for (auto& v : w.data) v = rng.uniform(-bound, bound);
        Tensor b({widths[l + 1]});
        for (auto& v : b.data) v = rng.uniform(-bound, bound);
        ps.add("fc" + std::to_string(l) + ".W", std::move(w));
        ps.add("fc" + std::to_string(l) + ".b", std::move(b));
    }
    return ps;
}

Var mlp_forward(const ad::Weights& w, std::size_t layers, const Var& x) {
    Var h = x;
    for (std::size_t l = 0; l < layers; ++l) {
        const std::string p = "fc" + std::to_string(l);
        h = matmul(h, w[p + ".W"]) + w[p + ".b"];
        if (l + 1 < layers) h = relu(h);
    }
    return h;
}

Var mse(const Var& pred, const Tensor& y) {
    return mean(square(pred - Var(y)));
}

SineExperiment::SineExperiment() {
    paml.n_ops = 5;
    paml.inner_steps = 1;
    paml.inner_lr = 0.01;
    paml.meta_lr = 1e-3;
    paml.support = shots;
    paml.query = query;
    paml.meta_sgd = false;
}

namespace {

Episode sine_episode(std::size_t layers, const Samples& support, const Samples& query) {
    auto s = std::make_shared<Samples>(support);
    auto q = std::make_shared<Samples>(query);
    return {"sine", [layers, s](const ad::Weights& w) { return mse(mlp_forward(w, layers, Var(s->x)), s->y); },
            [layers, q](const ad::Weights& w) { return mse(mlp_forward(w, layers, Var(q->x)), q->y); }};
}

/// Held-out MSE after `adapt_steps` SGD steps from `init`, averaged over tasks.
double adapted_loss(const SineExperiment& cfg, const ad::ParamStore& init, std::uint64_t seed) {
    const std::size_t layers = cfg.widths.size() - 1;
    Rng rng(seed);
    double total = 0.0;
    for (std::size_t t = 0; t < cfg.eval_tasks; ++t) {
        const auto task = sample_sine_task(rng);
        const auto support = sine_samples(task, cfg.shots, rng);
        const auto test = sine_samples(task, cfg.eval_points, rng);
        auto params = init.clone();
        for (int s = 0; s < cfg.adapt_steps; ++s) {
            params.zero_grad();
            ad::backward(mse(mlp_forward(ad::Weights::bind(params), layers, Var(support.x)), support.y));
            ad::sgd_step(params, cfg.adapt_lr);
        }
        ad::NoGradGuard off;
        total += mse(mlp_forward(ad::Weights::bind(params), layers, Var(test.x)), test.y).item();
    }
    return total / static_cast<double>(cfg.eval_tasks);
}

}  // namespace

SineOutcome run_sine_experiment(const SineExperiment& cfg, std::uint64_t seed) {
    const std::size_t layers = cfg.widths.size() - 1;
    const auto init = init_mlp(cfg.widths, derive_seed(seed, 1));

    auto paml_params = init.clone();
    ad::AdamWConfig mc;
    mc.lr = cfg.paml.meta_lr;
    mc.weight_decay = 0.0;
    mc.clip = 0.0;
    ad::AdamW meta_opt(mc);
    Rng meta_rng(derive_seed(seed, 2));
    for (long step = 0; step < cfg.meta_steps; ++step) {
        std::vector<Episode> eps;
        for (int i = 0; i < cfg.paml.n_ops; ++i) {
            const auto task = sample_sine_task(meta_rng);
            const auto s = sine_samples(task, cfg.shots, meta_rng);
            const auto q = sine_samples(task, cfg.query, meta_rng);
            eps.push_back(sine_episode(layers, s, q));
        }
        paml_step(paml_params, eps, cfg.paml, &meta_opt);
    }

    // Plain pretraining sees the same number of tasks and points, pooled.
    auto plain = init.clone();
    ad::AdamW opt(mc);
    Rng plain_rng(derive_seed(seed, 2));
    const std::size_t per_task = cfg.shots + cfg.query;
    for (long step = 0; step < cfg.meta_steps; ++step) {
        const std::size_t n = per_task * static_cast<std::size_t>(cfg.paml.n_ops);
        Samples pooled{Tensor({n, 1}), Tensor({n, 1})};
        std::size_t k = 0;
        for (int i = 0; i < cfg.paml.n_ops; ++i) {
            const auto task = sample_sine_task(plain_rng);
            const auto s = sine_samples(task, per_task, plain_rng);
            for (std::size_t j = 0; j < per_task; ++j, ++k) {
                pooled.x.data[k] = s.x.data[j];
                pooled.y.data[k] = s.y.data[j];
            }
        }
        plain.zero_grad();
        ad::backward(mse(mlp_forward(ad::Weights::bind(plain), layers, Var(pooled.x)), pooled.y));
        opt.step(plain);
    }
    plain.zero_grad();

    const std::uint64_t eval_seed = derive_seed(seed, 3);
    return {adapted_loss(cfg, paml_params, eval_seed), adapted_loss(cfg, plain, eval_seed)};
}

}  // namespace lemon::train::toy
