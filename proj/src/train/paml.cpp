#include "lemon/train/paml.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lemon/common/error.hpp"

namespace lemon::train {

using ad::Tensor;
using ad::Var;
using json = nlohmann::json;

void PamlConfig::validate() const {
    if (n_ops < 1) throw ConfigError("paml: operator batch size N must be >= 1");
    if (inner_steps < 0) throw ConfigError("paml: inner steps p must be >= 0");
    if (support < 1 || query < 1) throw ConfigError("paml: support and query sizes must be >= 1");
    if (!(inner_lr >= 0.0) || !(meta_lr >= 0.0)) throw ConfigError("paml: learning rates must be >= 0");
}

std::string to_json(const PamlConfig& c) {
    const json j = {{"n_ops", c.n_ops},
                    {"inner_steps", c.inner_steps},
                    {"inner_lr", c.inner_lr},
                    {"meta_lr", c.meta_lr},
                    {"support", c.support},
                    {"query", c.query},
                    {"order", c.order == PamlOrder::First ? "first" : "second"},
                    {"meta_sgd", c.meta_sgd},
                    {"second_order_limit", c.second_order_limit}};
    return j.dump();
}

PamlConfig paml_config_from_json(const std::string& text) {
    PamlConfig c;
    try {
        const json j = json::parse(text);
        auto read = [&](const char* key, auto& out) {
            if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
        };
        read("n_ops", c.n_ops);
        read("inner_steps", c.inner_steps);
        read("inner_lr", c.inner_lr);
        read("meta_lr", c.meta_lr);
        read("support", c.support);
        read("query", c.query);
        read("meta_sgd", c.meta_sgd);
        read("second_order_limit", c.second_order_limit);
        if (j.contains("order")) {
            const auto o = j.at("order").get<std::string>();
            if (o != "first" && o != "second") throw ConfigError("paml: order must be first or second");
            c.order = o == "first" ? PamlOrder::First : PamlOrder::Second;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("paml config: ") + e.what());
    }
    c.validate();
    return c;
}

double MetaGradient::norm() const {
    double s = 0.0;
    for (const auto& g : grads)
        for (double v : g.data) s += v * v;
    return std::sqrt(s);
}

namespace {

void check_finite(const Var& loss, const std::string& family, const char* what) {
    if (!std::isfinite(loss.item())) throw NumericError("paml: " + std::string(what) + " loss of " + family + " is not finite");
}

}  // namespace

MetaGradient paml_meta_gradient(const ad::ParamStore& theta, const std::vector<Episode>& episodes,
                                const PamlConfig& cfg) {
    cfg.validate();
    if (cfg.order == PamlOrder::Second && theta.count(true) > cfg.second_order_limit) {
        throw ConfigError("paml: second-order mode needs <= " + std::to_string(cfg.second_order_limit) +
                          " trainable parameters, model has " + std::to_string(theta.count(true)));
    }
    MetaGradient mg;
    std::vector<Var> leaves;
    for (const auto& p : theta.entries()) {
        if (!p.trainable) continue;
        mg.names.push_back(p.name);
        mg.grads.emplace_back(p.var.shape());
        leaves.push_back(p.var);
    }
    const bool second = cfg.order == PamlOrder::Second;
    for (const auto& ep : episodes) {
        EpisodeStats st;
        st.family = ep.family;
        ad::Weights w = ad::Weights::bind(theta);
        std::vector<Var> cur;
        cur.reserve(leaves.size());
        for (const auto& l : leaves) cur.push_back(second ? l : Var(l.value(), true));
        for (int j = 0; j < cfg.inner_steps; ++j) {
            for (std::size_t k = 0; k < cur.size(); ++k) w.set(mg.names[k], cur[k]);
            const Var loss = ep.support(w);
            check_finite(loss, ep.family, "support");
            st.support_losses.push_back(loss.item());
            const auto g = ad::grad(loss, cur, {}, second);
            for (std::size_t k = 0; k < cur.size(); ++k) {
                cur[k] = second ? cur[k] - g[k] * cfg.inner_lr : Var(ad::sgd(cur[k].value(), g[k].value(), cfg.inner_lr), true);
            }
        }
        for (std::size_t k = 0; k < cur.size(); ++k) w.set(mg.names[k], cur[k]);
        const Var q = ep.query(w);
        check_finite(q, ep.family, "query");
        st.query_loss = q.item();
        const auto g = ad::grad(q, second ? leaves : cur);
        for (std::size_t k = 0; k < g.size(); ++k) {
            auto& acc = mg.grads[k].data;
            const auto& gv = g[k].value().data;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += gv[i];
        }
        mg.episodes.push_back(std::move(st));
    }
    return mg;
}

MetaGradient paml_step(ad::ParamStore& theta, const std::vector<Episode>& episodes, const PamlConfig& cfg,
                       ad::AdamW* meta_opt) {
    auto mg = paml_meta_gradient(theta, episodes, cfg);
    for (std::size_t k = 0; k < mg.names.size(); ++k) {
        if (!std::all_of(mg.grads[k].data.begin(), mg.grads[k].data.end(), [](double v) { return std::isfinite(v); })) {
            throw NumericError("paml: non-finite meta-gradient for '" + mg.names[k] + "'");
        }
    }
    if (cfg.meta_sgd) {
        for (std::size_t k = 0; k < mg.names.size(); ++k) {
            auto& v = theta.entry(mg.names[k]).var.leaf_value();
            v = ad::sgd(v, mg.grads[k], cfg.meta_lr);
        }
        return mg;
    }
    if (!meta_opt) throw ConfigError("paml: AdamW meta update requested without an optimizer");
    theta.zero_grad();
    for (std::size_t k = 0; k < mg.names.size(); ++k) theta.entry(mg.names[k]).var.set_grad(mg.grads[k]);
    meta_opt->step(theta);
    theta.zero_grad();
    return mg;
}

bool EpisodeSet::disjoint() const {
    const std::set<std::size_t> s(support.begin(), support.end());
    if (s.size() != support.size()) return false;
    std::set<std::size_t> q;
    for (auto i : query) {
        if (s.count(i) || !q.insert(i).second) return false;
    }
    return true;
}

EpisodeSet sample_episode(const pdelab::Dataset& pool, std::size_t support, std::size_t query, Rng& rng) {
    const std::size_t n = pool.items.size();
    if (n < support + query) {
        throw DataError("episode: pool of " + std::to_string(n) + " items cannot supply " + std::to_string(support) +
                        " support + " + std::to_string(query) + " query draws");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    // Partial Fisher-Yates over the first support + query slots.
    for (std::size_t i = 0; i < support + query; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(n - 1)));
        std::swap(order[i], order[j]);
    }
    EpisodeSet e;
    e.family = pool.items.front().family;
    e.support.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(support));
    e.query.assign(order.begin() + static_cast<std::ptrdiff_t>(support),
                   order.begin() + static_cast<std::ptrdiff_t>(support + query));
    return e;
}

Episode make_episode(const ModelSpec& spec, const pdelab::Dataset& pool, const EpisodeSet& set) {
    auto sb = std::make_shared<prose::Batch>(spec.batch(pool, set.support));
    auto qb = std::make_shared<prose::Batch>(spec.batch(pool, set.query));
    return {set.family, [spec, sb](const ad::Weights& w) { return spec.loss(w, *sb); },
            [spec, qb](const ad::Weights& w) { return spec.loss(w, *qb); }};
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os.str();
}

}  // namespace

PamlResult paml_pretrain(const ModelSpec& spec, ad::ParamStore params, const std::vector<pdelab::Dataset>& pools,
                         const PamlConfig& cfg, long outer_steps, std::uint64_t seed, RunDir* run) {
    cfg.validate();
    if (outer_steps < 0) throw ConfigError("paml: outer steps must be >= 0");
    if (pools.size() < static_cast<std::size_t>(cfg.n_ops)) {
        throw ConfigError("paml: N = " + std::to_string(cfg.n_ops) + " families per step but only " +
                          std::to_string(pools.size()) + " available");
    }
    for (const auto& p : pools) {
        spec.check_grid(p.grid);
        if (p.items.empty()) throw DataError("paml: empty family pool");
    }
    ad::AdamWConfig oc;
    oc.lr = cfg.meta_lr;
    oc.weight_decay = 0.0;
    ad::AdamW meta_opt(oc);

    PamlResult r;
    for (long step = 0; step < outer_steps; ++step) {
        Rng rng(derive_seed(seed, 0x9a41, static_cast<std::uint64_t>(step)));
        std::vector<std::size_t> fam(pools.size());
        for (std::size_t i = 0; i < fam.size(); ++i) fam[i] = i;
        for (std::size_t i = 0; i < static_cast<std::size_t>(cfg.n_ops); ++i) {
            const auto j = static_cast<std::size_t>(
                rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(fam.size() - 1)));
            std::swap(fam[i], fam[j]);
        }
        std::vector<EpisodeSet> sets;
        std::vector<Episode> episodes;
        for (int i = 0; i < cfg.n_ops; ++i) {
            const auto& pool = pools[fam[static_cast<std::size_t>(i)]];
            sets.push_back(sample_episode(pool, cfg.support, cfg.query, rng));
            episodes.push_back(make_episode(spec, pool, sets.back()));
        }
        const auto mg = paml_step(params, episodes, cfg, cfg.meta_sgd ? nullptr : &meta_opt);
        double mean_q = 0.0;
        for (std::size_t i = 0; i < sets.size(); ++i) {
            const auto& st = mg.episodes[i];
            mean_q += st.query_loss;
            std::ostringstream os;
            os.precision(17);
            os << "step=" << step << " family=" << sets[i].family << " support=" << join(sets[i].support)
               << " query=" << join(sets[i].query) << " inner_first="
               << (st.support_losses.empty() ? std::nan("") : st.support_losses.front()) << " inner_last="
               << (st.support_losses.empty() ? std::nan("") : st.support_losses.back())
               << " query_loss=" << st.query_loss;
            r.episode_lines.push_back(os.str());
            if (run) run->episode(r.episode_lines.back());
        }
        const LogRow row{step, cfg.meta_lr, mean_q / static_cast<double>(sets.size()), mg.norm()};
        r.log.push_back(row);
        if (run) run->log(row);
    }
    if (run) {
        const json extra = {{"model", json::parse(to_json(spec))}, {"paml", json::parse(to_json(cfg))},
                            {"seed", seed}, {"step", outer_steps}};
        run->checkpoint(outer_steps, params, extra.dump());
    }
    r.params = std::move(params);
    return r;
}

}  // namespace lemon::train
