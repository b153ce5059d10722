#include "lemon/eval/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lemon/common/error.hpp"
#include "lemon/common/log.hpp"
#include "lemon/common/rng.hpp"
#include "lemon/eval/metrics.hpp"
#include "lemon/eval/zero_shot.hpp"

namespace lemon::eval {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Protocol p) {
    switch (p) {
        case Protocol::MolVsSol: return "mol_vs_sol";
        case Protocol::Scaling: return "scaling";
        case Protocol::PamlVsTl: return "paml_vs_tl";
        case Protocol::FtSizeSweep: return "ft_size_sweep";
    }
    return "?";
}

Protocol protocol_from_string(const std::string& s) {
    for (auto p : {Protocol::MolVsSol, Protocol::Scaling, Protocol::PamlVsTl, Protocol::FtSizeSweep}) {
        if (to_string(p) == s) return p;
    }
    throw ConfigError("unknown protocol '" + s + "' (expected mol_vs_sol, scaling, paml_vs_tl or ft_size_sweep)");
}

// ---------------------------------------------------------------- config

ProtocolConfig::ProtocolConfig() {
    grid.n_x = 64;
    grid.n_t_in = 4;
    grid.n_t_out = 8;
    model.kind = train::ModelKind::Prose;
    model.prose.d_model = 32;
    model.prose.n_heads = 4;
    model.prose.layers = {1, 1, 1, 1};
    model.prose.ffn_hidden = 64;
    sol.kind = train::ModelKind::DeepONet;
    sol.deeponet.width = 64;
    sol.deeponet.depth = 2;
    sol.deeponet.basis = 32;
    pretrain.steps = 2000;
    pretrain.batch_size = 8;
    pretrain.lr = 1e-3;
    finetune.train.steps = 300;
    finetune.train.batch_size = 8;
    finetune.train.lr = 5e-4;
    sol_train.steps = 2000;
    sol_train.batch_size = 16;
    sol_train.lr = 1e-3;
    sol_train.weight_decay = 0.0;
    paml.n_ops = 2;
    paml.inner_steps = 2;
    paml.inner_lr = 1e-2;
    paml.meta_lr = 1e-3;
    paml.meta_sgd = false;
}

void ProtocolConfig::validate(Protocol p) const {
    grid.validate();
    resolved_model().validate();
    pretrain.validate();
    finetune.train.validate();
    if (seeds.empty()) throw ConfigError("protocol: no seeds");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
        throw ConfigError("protocol: duplicate seeds");
    }
    if (pretrain_nq < 1 || pretrain_nu < 1) throw ConfigError("protocol: pretraining counts must be >= 1");
    if (ft_nq < 1 || test_nq < 1 || test_nu < 1) throw ConfigError("protocol: q-set sizes must be >= 1");
    if (eval_batch < 1) throw ConfigError("protocol: eval_batch must be >= 1");
    auto divisible = [&](int n, const char* what) {
        if (n < ft_nq || n % ft_nq != 0) {
            throw ConfigError(std::string("protocol: ") + what + " " + std::to_string(n) +
                              " is not a positive multiple of ft_nq " + std::to_string(ft_nq));
        }
    };
    auto families_known = [](const std::vector<std::string>& f, const char* what) {
        if (f.empty()) throw ConfigError(std::string("protocol: ") + what + " is empty");
        for (const auto& id : f) pdelab::family(id);
    };
    auto heldout_unseen = [&] {
        families_known(pretrain_families, "pretrain_families");
        families_known(heldout_families, "heldout_families");
        for (const auto& id : heldout_families) {
            if (std::find(pretrain_families.begin(), pretrain_families.end(), id) != pretrain_families.end()) {
                throw ProtocolError("protocol: held-out family " + id + " is also a pretraining family");
            }
        }
    };
    switch (p) {
        case Protocol::FtSizeSweep:
            heldout_unseen();
            if (ft_sizes.empty()) throw ConfigError("protocol: ft_sizes is empty");
            for (int n : ft_sizes) divisible(n, "fine-tune size");
            break;
        case Protocol::MolVsSol:
            heldout_unseen();
            divisible(n_ft, "n_ft");
            resolved_sol().validate();
            sol_train.validate();
            if (sol_factor < 1) throw ConfigError("protocol: sol_factor must be >= 1");
            break;
        case Protocol::Scaling:
            heldout_unseen();
            divisible(n_ft, "n_ft");
            if (family_counts.empty()) throw ConfigError("protocol: family_counts is empty");
            for (int k : family_counts) {
                if (k < 1 || static_cast<std::size_t>(k) > pretrain_families.size()) {
                    throw ConfigError("protocol: family count " + std::to_string(k) + " outside [1, " +
                                      std::to_string(pretrain_families.size()) + "]");
                }
            }
            break;
        case Protocol::PamlVsTl:
            families_known(riemann_families, "riemann_families");
            for (const auto& id : riemann_families) {
                if (!pdelab::family(id).has_flux()) throw ConfigError("protocol: " + id + " is not a conservation law");
            }
            if (source_wave != "shock" && source_wave != "rarefaction") {
                throw ConfigError("protocol: source_wave must be shock or rarefaction");
            }
            if (n_ft < 1 || riemann_pool < 1) throw ConfigError("protocol: Riemann counts must be >= 1");
            paml.validate();
            if (static_cast<std::size_t>(paml.n_ops) > riemann_families.size()) {
                throw ConfigError("protocol: paml N exceeds the number of Riemann families");
            }
            if (paml.support + paml.query > static_cast<std::size_t>(riemann_pool)) {
                throw ConfigError("protocol: riemann_pool smaller than support + query");
            }
            break;
    }
}

namespace {

train::ModelSpec resolve(train::ModelSpec m, const pdelab::Grid& g) {
    const auto base = train::ModelSpec::for_grid(m.kind, g);
    m.prose.n_x = m.deeponet.n_x = g.n_x;
    m.prose.n_t_in = m.deeponet.n_t_in = g.n_t_in;
    m.prose.n_t_out = m.deeponet.n_t_out = g.n_t_out;
    m.prose.vocab_size = base.prose.vocab_size;
    return m;
}

json grid_json(const pdelab::Grid& g) {
    return {{"n_x", g.n_x}, {"L_x", g.L_x}, {"n_t_in", g.n_t_in}, {"n_t_out", g.n_t_out}, {"T", g.T},
            {"split_fraction", g.split_fraction}};
}

json finetune_json(const train::FinetuneConfig& f) {
    return {{"mode", train::to_string(f.mode)},
            {"rank", f.lora.rank},
            {"alpha", f.lora.alpha},
            {"targets", f.lora.targets},
            {"train", json::parse(train::to_json(f.train))}};
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

train::ModelSpec ProtocolConfig::resolved_model() const { return resolve(model, grid); }
train::ModelSpec ProtocolConfig::resolved_sol() const { return resolve(sol, grid); }

std::string to_json(const ProtocolConfig& c) {
    json j;
    j["grid"] = grid_json(c.grid);
    j["model"] = json::parse(train::to_json(c.resolved_model()));
    j["sol"] = json::parse(train::to_json(c.resolved_sol()));
    j["pretrain_families"] = c.pretrain_families;
    j["heldout_families"] = c.heldout_families;
    j["pretrain_nq"] = c.pretrain_nq;
    j["pretrain_nu"] = c.pretrain_nu;
    j["pretrain"] = json::parse(train::to_json(c.pretrain));
    j["finetune"] = finetune_json(c.finetune);
    j["ft_nq"] = c.ft_nq;
    j["ft_sizes"] = c.ft_sizes;
    j["n_ft"] = c.n_ft;
    j["test_nq"] = c.test_nq;
    j["test_nu"] = c.test_nu;
    j["sol_factor"] = c.sol_factor;
    j["sol_train"] = json::parse(train::to_json(c.sol_train));
    j["family_counts"] = c.family_counts;
    j["riemann_families"] = c.riemann_families;
    j["source_wave"] = c.source_wave;
    j["riemann_pool"] = c.riemann_pool;
    j["paml"] = json::parse(train::to_json(c.paml));
    j["paml_outer_steps"] = c.paml_outer_steps;
    j["seeds"] = c.seeds;
    j["eval_batch"] = c.eval_batch;
    return j.dump(2);
}

ProtocolConfig protocol_config_from_json(const std::string& text) {
    ProtocolConfig c;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw ConfigError("protocol config: expected an object");
        if (j.contains("grid")) {
            const auto& g = j["grid"];
            read(g, "n_x", c.grid.n_x);
            read(g, "L_x", c.grid.L_x);
            read(g, "n_t_in", c.grid.n_t_in);
            read(g, "n_t_out", c.grid.n_t_out);
            read(g, "T", c.grid.T);
            read(g, "split_fraction", c.grid.split_fraction);
        }
        if (j.contains("model")) c.model = train::model_spec_from_json(j["model"].dump());
        if (j.contains("sol")) c.sol = train::model_spec_from_json(j["sol"].dump());
        read(j, "pretrain_families", c.pretrain_families);
        read(j, "heldout_families", c.heldout_families);
        read(j, "pretrain_nq", c.pretrain_nq);
        read(j, "pretrain_nu", c.pretrain_nu);
        if (j.contains("pretrain")) c.pretrain = train::train_config_from_json(j["pretrain"].dump());
        if (j.contains("finetune")) {
            const auto& f = j["finetune"];
            if (f.contains("mode")) c.finetune.mode = train::finetune_mode_from_string(f["mode"].get<std::string>());
            read(f, "rank", c.finetune.lora.rank);
            read(f, "alpha", c.finetune.lora.alpha);
            read(f, "targets", c.finetune.lora.targets);
            if (f.contains("train")) c.finetune.train = train::train_config_from_json(f["train"].dump());
        }
        read(j, "ft_nq", c.ft_nq);
        read(j, "ft_sizes", c.ft_sizes);
        read(j, "n_ft", c.n_ft);
        read(j, "test_nq", c.test_nq);
        read(j, "test_nu", c.test_nu);
        read(j, "sol_factor", c.sol_factor);
        if (j.contains("sol_train")) c.sol_train = train::train_config_from_json(j["sol_train"].dump());
        read(j, "family_counts", c.family_counts);
        read(j, "riemann_families", c.riemann_families);
        read(j, "source_wave", c.source_wave);
        read(j, "riemann_pool", c.riemann_pool);
        if (j.contains("paml")) c.paml = train::paml_config_from_json(j["paml"].dump());
        read(j, "paml_outer_steps", c.paml_outer_steps);
        read(j, "seeds", c.seeds);
        read(j, "eval_batch", c.eval_batch);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("protocol config: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------- output

namespace {

std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string hex(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw DataError("cannot write " + p.string());
}

json row_json(const ReportRow& r) {
    return {{"protocol", r.protocol},
            {"family", r.family},
            {"method", r.method},
            {"seed", r.seed},
            {"n_ft", r.n_ft},
            {"error_pct", r.error_pct},
            {"error_before_pct", r.error_before_pct},
            {"n_test", r.n_test},
            {"checkpoint", r.checkpoint},
            {"checkpoint_hash", hex(r.checkpoint_hash)},
            {"tuned_hash", hex(r.tuned_hash)},
            {"ft_data_seed", r.ft_data_seed},
            {"test_data_seed", r.test_data_seed},
            {"ft_q", r.ft_q},
            {"test_q", r.test_q}};
}

}  // namespace

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::string s = "protocol,family,method,seed,n_ft,error_pct\n";
    for (const auto& r : rows) {
        s += r.protocol + ',' + r.family + ',' + r.method + ',' + std::to_string(r.seed) + ',' + std::to_string(r.n_ft) +
             ',' + num(r.error_pct) + '\n';
    }
    return s;
}

double median_error(const std::vector<ReportRow>& rows, const std::string& family, const std::string& method,
                    std::size_t n_ft) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.family == family && r.method == method && r.n_ft == n_ft) v.push_back(r.error_pct);
    }
    if (v.empty()) throw ConfigError("median_error: no cells for " + family + "/" + method);
    return median_of(v);
}

// ---------------------------------------------------------------- runner

namespace {

struct Split {
    pdelab::Dataset ft;
    pdelab::Dataset test;
    std::uint64_t ft_seed = 0;
    std::uint64_t test_seed = 0;
};

struct Pretrained {
    ad::ParamStore params;
    std::string dir;
    std::uint64_t hash = 0;
};

class Runner {
public:
    Runner(Protocol p, const ProtocolConfig& cfg, fs::path out)
        : p_(p), cfg_(cfg), out_(std::move(out)), spec_(cfg.resolved_model()), sol_(cfg.resolved_sol()) {}

    std::vector<ReportRow> rows;
    json summary = json::object();

    void run() {
        switch (p_) {
            case Protocol::FtSizeSweep: ft_size_sweep(); break;
            case Protocol::MolVsSol: mol_vs_sol(); break;
            case Protocol::Scaling: scaling(); break;
            case Protocol::PamlVsTl: paml_vs_tl(); break;
        }
    }

private:
    Protocol p_;
    const ProtocolConfig& cfg_;
    fs::path out_;
    train::ModelSpec spec_;
    train::ModelSpec sol_;

    train::TrainConfig seeded(train::TrainConfig t, std::uint64_t seed, std::uint64_t tag) const {
        t.seed = derive_seed(seed, tag, t.seed);
        return t;
    }

    Pretrained save(const std::string& tag, std::uint64_t seed, ad::ParamStore params, const train::ModelSpec& spec) {
        Pretrained p;
        p.dir = "checkpoints/" + tag + "_seed" + std::to_string(seed);
        const json extra = {{"model", json::parse(train::to_json(spec))}, {"seed", seed}, {"tag", tag}};
        ad::save_checkpoint(params, out_ / p.dir, extra.dump());
        p.hash = param_hash(params);
        p.params = std::move(params);
        return p;
    }

    Pretrained pretrain_on(const std::vector<std::string>& families, std::uint64_t seed, const std::string& tag) {
        std::vector<pdelab::Dataset> parts;
        for (const auto& id : families) {
            parts.push_back(pdelab::sample_dataset(pdelab::family(id), cfg_.pretrain_nq, cfg_.pretrain_nu,
                                                   derive_seed(seed, stable_hash(id), 0xda7a), cfg_.grid));
        }
        log::info("pretraining " + tag + " seed " + std::to_string(seed));
        auto r = train::pretrain(spec_, spec_.init(derive_seed(seed, 0x1417)), pdelab::merge(parts),
                                 seeded(cfg_.pretrain, seed, 0x9e7));
        return save(tag, seed, std::move(r.params), spec_);
    }

    /// Sparse fine-tune operators and disjoint test operators of one family.
    Split split(const std::string& family, std::uint64_t seed, int n_ft) const {
        const auto& fam = pdelab::family(family);
        const auto qs = pdelab::sample_q_set(fam, cfg_.ft_nq + cfg_.test_nq, derive_seed(seed, stable_hash(family), 0x95));
        const std::vector<std::vector<double>> ft_q(qs.begin(), qs.begin() + cfg_.ft_nq);
        const std::vector<std::vector<double>> test_q(qs.begin() + cfg_.ft_nq, qs.end());
        check_disjoint(ft_q, test_q);
        Split s;
        s.ft_seed = derive_seed(seed, stable_hash(family), 0xf7);
        s.test_seed = derive_seed(seed, stable_hash(family), 0x7e57);
        s.ft = pdelab::sample_dataset_for(fam, ft_q, n_ft / cfg_.ft_nq, s.ft_seed, cfg_.grid);
        s.test = pdelab::sample_dataset_for(fam, test_q, cfg_.test_nu, s.test_seed, cfg_.grid);
        return s;
    }

    ReportRow cell(const std::string& method, std::uint64_t seed, const Pretrained& pre, const Split& s,
                   const ZeroShotResult& z) const {
        ReportRow r;
        r.protocol = to_string(p_);
        r.family = z.family;
        r.method = method;
        r.seed = seed;
        r.n_ft = z.n_ft;
        r.error_pct = z.error_after;
        r.error_before_pct = z.error_before;
        r.n_test = z.n_test;
        r.checkpoint = pre.dir;
        r.checkpoint_hash = pre.hash;
        r.tuned_hash = z.tuned_hash;
        r.ft_data_seed = s.ft_seed;
        r.test_data_seed = s.test_seed;
        r.ft_q = z.ft_q;
        r.test_q = z.test_q;
        return r;
    }

    train::FinetuneConfig ft_config(std::uint64_t seed) const {
        auto f = cfg_.finetune;
        f.train = seeded(f.train, seed, 0xf1);
        return f;
    }

    ZeroShotResult zero_shot(const train::ModelSpec& spec, const Pretrained& pre, const Split& s,
                             std::uint64_t seed) const {
        return zero_shot_eval(spec, pre.params, s.ft, s.test, ft_config(seed), cfg_.eval_batch);
    }

    void ft_size_sweep() {
        for (auto seed : cfg_.seeds) {
            const auto pre = pretrain_on(cfg_.pretrain_families, seed, "mol");
            for (const auto& fam : cfg_.heldout_families) {
                bool frozen_done = false;
                for (int n : cfg_.ft_sizes) {
                    const auto s = split(fam, seed, n);
                    const auto z = zero_shot(spec_, pre, s, seed);
                    if (!frozen_done) {
                        auto f = cell("frozen", seed, pre, s, z);
                        f.n_ft = 0;
                        f.error_pct = z.error_before;
                        f.tuned_hash = pre.hash;
                        f.ft_q.clear();
                        rows.push_back(std::move(f));
                        frozen_done = true;
                    }
                    rows.push_back(cell("prose", seed, pre, s, z));
                }
            }
        }
        std::vector<int> sizes = cfg_.ft_sizes;
        std::sort(sizes.begin(), sizes.end());
        for (const auto& fam : cfg_.heldout_families) {
            json medians = json::array();
            std::string dat = "# n_ft median_error_pct\n";
            dat += "0 " + num(median_error(rows, fam, "frozen", 0)) + '\n';
            bool monotone = true;
            double prev = 0.0;
            for (std::size_t i = 0; i < sizes.size(); ++i) {
                const double m = median_error(rows, fam, "prose", static_cast<std::size_t>(sizes[i]));
                if (i > 0 && m > prev) monotone = false;
                prev = m;
                medians.push_back({{"n_ft", sizes[i]}, {"median_error_pct", m}});
                dat += std::to_string(sizes[i]) + ' ' + num(m) + '\n';
            }
            summary[fam] = {{"medians", medians}, {"trend", monotone ? "pass" : "warn"}};
            write_text(out_ / "plots" / ("ft_size_sweep_" + fam + ".dat"), dat);
        }
    }

    void mol_vs_sol() {
        for (auto seed : cfg_.seeds) {
            const auto pre = pretrain_on(cfg_.pretrain_families, seed, "mol");
            for (const auto& fam : cfg_.heldout_families) {
                const auto s = split(fam, seed, cfg_.n_ft);
                rows.push_back(cell("prose-lite", seed, pre, s, zero_shot(spec_, pre, s, seed)));

                // SOL: trained from scratch on the held-out family only.
                Split sol_split = s;
                if (cfg_.sol_factor > 1) {
                    sol_split.ft = pdelab::sample_dataset_for(pdelab::family(fam), operators_of(s.ft),
                                                              cfg_.n_ft / cfg_.ft_nq * cfg_.sol_factor, s.ft_seed,
                                                              cfg_.grid);
                }
                check_disjoint(operators_of(sol_split.ft), operators_of(s.test));
                auto init = sol_.init(derive_seed(seed, stable_hash(fam), 0x501));
                const auto trained =
                    train::pretrain(sol_, init.clone(), sol_split.ft, seeded(cfg_.sol_train, seed, 0x502)).params;
                const auto sol_pre = save("sol_" + fam, seed, trained.clone(), sol_);
                ZeroShotResult z;
                z.family = fam;
                z.n_ft = sol_split.ft.items.size();
                z.n_test = s.test.items.size();
                z.error_before = mean_of(evaluate(sol_, ad::Weights::bind(init), s.test, cfg_.eval_batch));
                z.error_after = mean_of(evaluate(sol_, ad::Weights::bind(trained), s.test, cfg_.eval_batch));
                z.ft_q = operators_of(sol_split.ft);
                z.test_q = operators_of(s.test);
                z.tuned_hash = sol_pre.hash;
                rows.push_back(cell("deeponet-lite", seed, sol_pre, sol_split, z));
            }
        }
        std::string dat = "# family prose_lite deeponet_lite (median error %)\n";
        for (const auto& fam : cfg_.heldout_families) {
            const double a = median_error(rows, fam, "prose-lite", static_cast<std::size_t>(cfg_.n_ft));
            const double b = median_error(rows, fam, "deeponet-lite",
                                          static_cast<std::size_t>(cfg_.n_ft * cfg_.sol_factor));
            summary[fam] = {{"prose_lite_median", a}, {"deeponet_lite_median", b}, {"mol_better", a < b}};
            dat += fam + ' ' + num(a) + ' ' + num(b) + '\n';
        }
        write_text(out_ / "plots" / "mol_vs_sol.dat", dat);
    }

    void scaling() {
        for (auto seed : cfg_.seeds) {
            for (int k : cfg_.family_counts) {
                const std::vector<std::string> fams(cfg_.pretrain_families.begin(),
                                                    cfg_.pretrain_families.begin() + k);
                const std::string method = "families=" + std::to_string(k);
                const auto pre = pretrain_on(fams, seed, "families" + std::to_string(k));
                for (const auto& fam : cfg_.heldout_families) {
                    const auto s = split(fam, seed, cfg_.n_ft);
                    rows.push_back(cell(method, seed, pre, s, zero_shot(spec_, pre, s, seed)));
                }
            }
        }
        for (const auto& fam : cfg_.heldout_families) {
            std::string dat = "# families median_error_pct\n";
            json medians = json::array();
            for (int k : cfg_.family_counts) {
                const double m = median_error(rows, fam, "families=" + std::to_string(k), static_cast<std::size_t>(cfg_.n_ft));
                medians.push_back({{"families", k}, {"median_error_pct", m}});
                dat += std::to_string(k) + ' ' + num(m) + '\n';
            }
            summary[fam] = {{"medians", medians}};
            if (cfg_.family_counts.size() >= 2) {
                const auto lo = *std::min_element(cfg_.family_counts.begin(), cfg_.family_counts.end());
                const auto hi = *std::max_element(cfg_.family_counts.begin(), cfg_.family_counts.end());
                summary[fam]["sign_test"] = sign_summary(fam, "families=" + std::to_string(hi),
                                                         "families=" + std::to_string(lo));
            }
            write_text(out_ / "plots" / ("scaling_" + fam + ".dat"), dat);
        }
    }

    /// Wins of `a` over `b` (lower error) across seeds.
    json sign_summary(const std::string& fam, const std::string& a, const std::string& b) const {
        int wins = 0, n = 0;
        for (auto seed : cfg_.seeds) {
            double ea = -1, eb = -1;
            for (const auto& r : rows) {
                if (r.family != fam || r.seed != seed) continue;
                if (r.method == a) ea = r.error_pct;
                if (r.method == b) eb = r.error_pct;
            }
            if (ea < 0 || eb < 0) continue;
            ++n;
            wins += ea < eb;
        }
        json j = {{"better", a}, {"than", b}, {"wins", wins}, {"n", n}};
        j["p_value"] = n > 0 ? sign_test_p(wins, n) : 1.0;
        return j;
    }

    void paml_vs_tl() {
        const bool shock_source = cfg_.source_wave == "shock";
        const auto src = shock_source ? pdelab::RiemannType::Shock : pdelab::RiemannType::Rarefaction;
        const auto tgt = shock_source ? pdelab::RiemannType::Rarefaction : pdelab::RiemannType::Shock;
        for (auto seed : cfg_.seeds) {
            std::vector<pdelab::Dataset> pools;
            for (const auto& id : cfg_.riemann_families) {
                pools.push_back(pdelab::riemann_dataset(pdelab::family(id), src, cfg_.riemann_pool,
                                                        derive_seed(seed, stable_hash(id), 0x5e), cfg_.grid));
            }
            const auto init = spec_.init(derive_seed(seed, 0x1417));
            log::info("paml_vs_tl: TL pretraining, seed " + std::to_string(seed));
            const auto tl = save("tl", seed,
                                 train::pretrain(spec_, init.clone(), pdelab::merge(pools),
                                                 seeded(cfg_.pretrain, seed, 0x9e7)).params,
                                 spec_);
            log::info("paml_vs_tl: PAML pretraining, seed " + std::to_string(seed));
            const auto pm = save("paml", seed,
                                 train::paml_pretrain(spec_, init.clone(), pools, cfg_.paml, cfg_.paml_outer_steps,
                                                      derive_seed(seed, 0x9a)).params,
                                 spec_);
            for (const auto& id : cfg_.riemann_families) {
                Split s;
                s.ft_seed = derive_seed(seed, stable_hash(id), 0xf7);
                s.test_seed = derive_seed(seed, stable_hash(id), 0x7e57);
                s.ft = pdelab::riemann_dataset(pdelab::family(id), tgt, cfg_.n_ft, s.ft_seed, cfg_.grid);
                s.test = pdelab::riemann_dataset(pdelab::family(id), tgt, cfg_.test_nq * cfg_.test_nu, s.test_seed,
                                                 cfg_.grid);
                rows.push_back(cell("tl", seed, tl, s, zero_shot(spec_, tl, s, seed)));
                rows.push_back(cell("paml", seed, pm, s, zero_shot(spec_, pm, s, seed)));
            }
        }
        std::string dat = "# family tl paml (median error %)\n";
        for (const auto& id : cfg_.riemann_families) {
            const double a = median_error(rows, id, "tl", static_cast<std::size_t>(cfg_.n_ft));
            const double b = median_error(rows, id, "paml", static_cast<std::size_t>(cfg_.n_ft));
            summary[id] = {{"tl_median", a}, {"paml_median", b}, {"sign_test", sign_summary(id, "paml", "tl")}};
            dat += id + ' ' + num(a) + ' ' + num(b) + '\n';
        }
        write_text(out_ / "plots" / "paml_vs_tl.dat", dat);
    }
};

/// Wide table: one row per family, one median column per (method, n_ft).
std::string wide_table(const std::vector<ReportRow>& rows) {
    std::vector<std::pair<std::string, std::size_t>> cols;
    std::vector<std::string> fams;
    for (const auto& r : rows) {
        if (std::find(cols.begin(), cols.end(), std::make_pair(r.method, r.n_ft)) == cols.end())
            cols.emplace_back(r.method, r.n_ft);
        if (std::find(fams.begin(), fams.end(), r.family) == fams.end()) fams.push_back(r.family);
    }
    std::string s = "family";
    for (const auto& [m, n] : cols) s += ',' + m + "@" + std::to_string(n);
    s += '\n';
    for (const auto& f : fams) {
        s += f;
        for (const auto& [m, n] : cols) {
            bool any = false;
            for (const auto& r : rows) any = any || (r.family == f && r.method == m && r.n_ft == n);
            s += ',' + (any ? num(median_error(rows, f, m, n)) : std::string());
        }
        s += '\n';
    }
    return s;
}

}  // namespace

EvalReport run_protocol(Protocol p, const ProtocolConfig& cfg, const fs::path& out_dir) {
    cfg.validate(p);
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(out_dir / "plots");
    fs::create_directories(out_dir / "checkpoints");
    fs::remove(out_dir / "PARTIAL");
    const std::string cfg_json = to_json(cfg);
    write_text(out_dir / "config.json", cfg_json + '\n');

    EvalReport rep;
    rep.protocol = p;
    rep.config_hash = stable_hash(cfg_json);
    Runner runner(p, cfg, out_dir);
    std::string failure;
    std::exception_ptr error;
    try {
        runner.run();
    } catch (const std::exception& e) {
        failure = e.what();
        error = std::current_exception();
        rep.partial = true;
    }
    rep.rows = runner.rows;
    rep.summary = runner.summary.dump();

    json audit = {{"protocol", to_string(p)},
                  {"config_hash", hex(rep.config_hash)},
                  {"partial", rep.partial},
                  {"summary", runner.summary},
                  {"cells", json::array()}};
    for (const auto& r : rep.rows) audit["cells"].push_back(row_json(r));
    write_text(out_dir / "report.csv", report_csv(rep.rows));
    write_text(out_dir / "audit.json", audit.dump(2) + '\n');
    if (!rep.rows.empty() && !rep.partial) write_text(out_dir / "table.csv", wide_table(rep.rows));
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(out_dir / "timing.json", json({{"wall_seconds", rep.wall_seconds}}).dump() + '\n');
    if (rep.partial) {
        write_text(out_dir / "PARTIAL", failure + '\n');
        std::rethrow_exception(error);
    }
    return rep;
}

}  // namespace lemon::eval
