#include "lemon/cli/cli.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "lemon/common/error.hpp"
#include "lemon/common/log.hpp"
#include "lemon/eval/metrics.hpp"
#include "lemon/eval/protocol.hpp"
#include "lemon/train/paml.hpp"
#include "lemon/train/trainer.hpp"

namespace lemon::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
    if (dynamic_cast<const ProtocolError*>(&e)) return kProtocolViolation;
    if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const SolverError*>(&e)) return kNumericFailure;
    if (dynamic_cast<const Error*>(&e)) return kDataError;
    return kInternal;
}

namespace {

const char* type_name(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return "ConfigError";
    if (dynamic_cast<const ProtocolError*>(&e)) return "ProtocolError";
    if (dynamic_cast<const NumericError*>(&e)) return "NumericError";
    if (dynamic_cast<const SolverError*>(&e)) return "SolverError";
    if (dynamic_cast<const DataError*>(&e)) return "DataError";
    if (dynamic_cast<const DimensionError*>(&e)) return "DimensionError";
    if (dynamic_cast<const VocabularyError*>(&e)) return "VocabularyError";
    if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
    if (dynamic_cast<const Error*>(&e)) return "Error";
    return "InternalError";
}

void report_error(std::ostream& err, int code, const std::string& type, const std::string& message) {
    err << "error code=" << code << " type=" << type << " message=" << json(message).dump() << '\n';
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos == v.size()) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("grid: value of '" + key + "' is not a number: '" + v + "'");
}

}  // namespace

pdelab::Grid parse_grid(const std::string& text, pdelab::Grid g) {
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("grid: expected key=value, got '" + item + "'");
        const std::string key = item.substr(0, eq);
        const double v = to_double(key, item.substr(eq + 1));
        auto as_int = [&] {
            if (v != std::floor(v)) throw ConfigError("grid: '" + key + "' must be an integer");
            return static_cast<int>(v);
        };
        if (key == "nx") {
            g.n_x = as_int();
        } else if (key == "ntin") {
            g.n_t_in = as_int();
        } else if (key == "ntout") {
            g.n_t_out = as_int();
        } else if (key == "T") {
            g.T = v;
        } else if (key == "L") {
            g.L_x = v;
        } else if (key == "split") {
            g.split_fraction = v;
        } else {
            throw ConfigError("grid: unknown key '" + key + "' (nx, ntin, ntout, T, L, split)");
        }
    }
    g.validate();
    return g;
}

namespace {

// ---------------------------------------------------------------- options

struct ModelOpts {
    std::string kind = "prose";
    int d_model = 64;
    int heads = 4;
    std::vector<int> layers{2, 2, 2, 2};
    int ffn = 256;
    int max_symbols = 48;
    bool normalize = true;
    int width = 64;
    int depth = 2;
    int basis = 32;
    std::uint64_t init_seed = 0;

    void add(CLI::App* app) {
        app->add_option("--model", kind, "Architecture: prose or deeponet")->check(CLI::IsMember({"prose", "deeponet"}))->capture_default_str();
        app->add_option("--d-model", d_model, "PROSE-lite hidden width")->capture_default_str();
        app->add_option("--heads", heads, "Attention heads")->capture_default_str();
        app->add_option("--layers", layers, "Layer counts: data encoder, symbol encoder, fusion, decoder")
            ->expected(4)->delimiter(',')->capture_default_str();
        app->add_option("--ffn", ffn, "Feed-forward hidden width")->capture_default_str();
        app->add_option("--max-symbols", max_symbols, "Longest symbol sequence")->capture_default_str();
        app->add_flag("--normalize-inputs,!--no-normalize-inputs", normalize, "Per-example input scaling")->capture_default_str();
        app->add_option("--width", width, "DeepONet-lite subnet width")->capture_default_str();
        app->add_option("--depth", depth, "DeepONet-lite hidden layers")->capture_default_str();
        app->add_option("--basis", basis, "DeepONet-lite basis size")->capture_default_str();
        app->add_option("--init-seed", init_seed, "Parameter initialization seed")->capture_default_str();
    }

    train::ModelSpec spec(const pdelab::Grid& grid) const {
        auto s = train::ModelSpec::for_grid(train::model_kind_from_string(kind), grid);
        s.prose.d_model = d_model;
        s.prose.n_heads = heads;
        s.prose.layers = {layers[0], layers[1], layers[2], layers[3]};
        s.prose.ffn_hidden = ffn;
        s.prose.max_symbols = max_symbols;
        s.prose.normalize_inputs = normalize;
        s.deeponet.width = width;
        s.deeponet.depth = depth;
        s.deeponet.basis = basis;
        s.validate();
        return s;
    }
};

struct TrainOpts {
    train::TrainConfig cfg;

    explicit TrainOpts(long steps) { cfg.steps = steps; }

    void add(CLI::App* app) {
        app->add_option("--steps", cfg.steps, "Optimizer steps")->capture_default_str();
        app->add_option("--batch", cfg.batch_size, "Batch size")->capture_default_str();
        app->add_option("--lr", cfg.lr, "Peak learning rate")->capture_default_str();
        app->add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay")->capture_default_str();
        app->add_option("--warmup", cfg.warmup_fraction, "Warmup fraction of the run")->capture_default_str();
        app->add_option("--min-lr-ratio", cfg.min_lr_ratio, "Final learning rate as a fraction of the peak")->capture_default_str();
        app->add_option("--clip", cfg.clip, "Global gradient-norm clip (<= 0 disables)")->capture_default_str();
        app->add_option("--seed", cfg.seed, "Batch order seed")->capture_default_str();
        app->add_option("--checkpoint-every", cfg.checkpoint_every, "Intermediate checkpoint period (0: final only)")->capture_default_str();
    }
};

struct Context {
    std::ostream& out;
    std::string command;
    json settings = json::object();
};

fs::path dataset_stem(const std::string& arg) {
    const fs::path p(arg);
    if (fs::is_directory(p) && fs::exists(p / "data.manifest")) return p / "data";
    if (p.extension() == ".manifest") return fs::path(p).replace_extension();
    return p;
}

pdelab::Dataset load_data(const std::vector<std::string>& args) {
    std::vector<pdelab::Dataset> parts;
    for (const auto& a : args) parts.push_back(pdelab::read_dataset(dataset_stem(a)));
    return parts.size() == 1 ? std::move(parts.front()) : pdelab::merge(parts);
}

struct LoadedCheckpoint {
    ad::ParamStore params;
    train::ModelSpec spec;
};

LoadedCheckpoint load_model(const std::string& dir) {
    std::string extra;
    LoadedCheckpoint c;
    c.params = ad::load_checkpoint(dir, &extra);
    const json j = json::parse(extra);
    if (!j.contains("model")) throw DataError("checkpoint " + dir + " does not record its model configuration");
    try {
        c.spec = train::model_spec_from_json(j["model"].dump());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint model configuration: ") + e.what());
    }
    return c;
}

/// Writes out/config.json once every setting is resolved and echoes it.
void write_config(Context& ctx, const fs::path& out) {
    if (fs::exists(out / "config.json")) throw ConfigError("output directory " + out.string() + " already holds a run");
    fs::create_directories(out);
    const json doc = {{"command", ctx.command}, {"version", "0.1.0"}, {"settings", ctx.settings}};
    std::ofstream f(out / "config.json", std::ios::binary);
    f << doc.dump(2) << '\n';
    if (!f) throw DataError("cannot write " + (out / "config.json").string());
    ctx.out << "config " << doc.dump() << '\n';
}

json model_json(const train::ModelSpec& s) { return json::parse(train::to_json(s)); }

// ---------------------------------------------------------------- commands

struct GenerateCmd {
    std::vector<std::string> families;
    int nq = 10;
    int nu = 10;
    std::uint64_t seed = 0;
    std::string grid = "nx=128,ntin=8,ntout=16";
    std::string riemann;
    double q_width = 0.5;
    int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--families", families, "Family ids (comma separated)")->required()->delimiter(',');
        app->add_option("--nq", nq, "Operators per family")->capture_default_str();
        app->add_option("--nu", nu, "Initial conditions per operator")->capture_default_str();
        app->add_option("--seed", seed, "Sampling seed")->capture_default_str();
        app->add_option("--grid", grid, "Grid: nx=..,ntin=..,ntout=..[,T=..,L=..,split=..]")->capture_default_str();
        app->add_option("--riemann", riemann, "Riemann data of one wave type (nq * nu draws)")
            ->check(CLI::IsMember({"shock", "rarefaction"}));
        app->add_option("--q-width", q_width, "Relative half-width of the operator distribution")->capture_default_str();
        app->add_option("--threads", threads, "Solver worker threads")->capture_default_str();
        app->add_option("--out", out, "Output directory")->required();
    }

    int run(Context& ctx) const {
        const auto g = parse_grid(grid);
        if (nq < 1 || nu < 1) throw ConfigError("generate: --nq and --nu must be >= 1");
        for (const auto& f : families) pdelab::family(f);
        ctx.settings = {{"families", families}, {"nq", nq}, {"nu", nu}, {"seed", seed}, {"grid", grid},
                        {"riemann", riemann}, {"q_width", q_width}, {"threads", threads}};
        write_config(ctx, out);
        pdelab::SampleOptions opts;
        opts.q_dist.rel_width = q_width;
        opts.threads = threads;
        std::vector<pdelab::Dataset> parts;
        for (const auto& f : families) {
            const auto& fam = pdelab::family(f);
            const auto fseed = derive_seed(seed, stable_hash(f));
            if (riemann.empty()) {
                parts.push_back(pdelab::sample_dataset(fam, nq, nu, fseed, g, opts));
            } else {
                const auto type = riemann == "shock" ? pdelab::RiemannType::Shock : pdelab::RiemannType::Rarefaction;
                parts.push_back(pdelab::riemann_dataset(fam, type, nq * nu, fseed, g, opts));
            }
        }
        const auto data = parts.size() == 1 ? parts.front() : pdelab::merge(parts);
        pdelab::write_dataset(data, fs::path(out) / "data");
        ctx.out << "generated " << data.size() << " IOFPs -> " << (fs::path(out) / "data").string() << '\n';
        return kOk;
    }
};

struct PretrainCmd {
    std::vector<std::string> data;
    ModelOpts model;
    TrainOpts train{2000};
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--data", data, "Dataset stems or generate output directories")->required()->delimiter(',');
        model.add(app);
        train.add(app);
        app->add_option("--out", out, "Run directory")->required();
    }

    int run(Context& ctx) const {
        const auto d = load_data(data);
        const auto spec = model.spec(d.grid);
        train.cfg.validate();
        ctx.settings = {{"data", data}, {"model", model_json(spec)}, {"init_seed", model.init_seed},
                        {"train", json::parse(train::to_json(train.cfg))}};
        write_config(ctx, out);
        auto run = train::RunDir::create(fs::path(out) / "run", ctx.settings.dump());
        const auto r = train::pretrain(spec, spec.init(model.init_seed), d, train.cfg, &run);
        ctx.out << "pretrained " << train.cfg.steps << " steps";
        if (!r.log.empty()) ctx.out << ", final loss " << r.log.back().loss;
        ctx.out << " -> " << run.checkpoint_dir(train.cfg.steps).string() << '\n';
        return kOk;
    }
};

struct PamlCmd {
    std::vector<std::string> data;
    ModelOpts model;
    train::PamlConfig paml;
    std::string order = "first";
    std::string meta_optimizer = "sgd";
    long outer_steps = 1000;
    std::uint64_t seed = 0;
    std::string out;

    PamlCmd() {
        paml.n_ops = 5;
        paml.inner_steps = 5;
    }

    void add(CLI::App* app) {
        app->add_option("--data", data, "Datasets; each family forms one episode pool")->required()->delimiter(',');
        model.add(app);
        app->add_option("--n-ops", paml.n_ops, "Families per meta step (N)")->capture_default_str();
        app->add_option("--inner-steps", paml.inner_steps, "Inner SGD steps (p)")->capture_default_str();
        app->add_option("--inner-lr", paml.inner_lr, "Inner learning rate")->capture_default_str();
        app->add_option("--meta-lr", paml.meta_lr, "Meta learning rate")->capture_default_str();
        app->add_option("--support", paml.support, "Support IOFPs per episode")->capture_default_str();
        app->add_option("--query", paml.query, "Query IOFPs per episode")->capture_default_str();
        app->add_option("--order", order, "Meta-gradient order")->check(CLI::IsMember({"first", "second"}))->capture_default_str();
        app->add_option("--meta-optimizer", meta_optimizer, "Meta update: plain sgd or adamw")
            ->check(CLI::IsMember({"sgd", "adamw"}))->capture_default_str();
        app->add_option("--second-order-limit", paml.second_order_limit, "Parameter limit for second order")->capture_default_str();
        app->add_option("--outer-steps", outer_steps, "Meta steps")->capture_default_str();
        app->add_option("--seed", seed, "Episode sampling seed")->capture_default_str();
        app->add_option("--out", out, "Run directory")->required();
    }

    int run(Context& ctx) {
        paml.order = order == "first" ? train::PamlOrder::First : train::PamlOrder::Second;
        paml.meta_sgd = meta_optimizer == "sgd";
        paml.validate();
        const auto d = load_data(data);
        // One pool per family, in order of first appearance.
        std::vector<pdelab::Dataset> pools;
        std::map<std::string, std::size_t> slot;
        for (const auto& it : d.items) {
            auto [pos, fresh] = slot.emplace(it.family, pools.size());
            if (fresh) {
                pools.emplace_back();
                pools.back().grid = d.grid;
            }
            pools[pos->second].items.push_back(it);
        }
        const auto spec = model.spec(d.grid);
        ctx.settings = {{"data", data}, {"model", model_json(spec)}, {"init_seed", model.init_seed},
                        {"paml", json::parse(train::to_json(paml))}, {"outer_steps", outer_steps}, {"seed", seed}};
        write_config(ctx, out);
        auto run = train::RunDir::create(fs::path(out) / "run", ctx.settings.dump());
        const auto r = train::paml_pretrain(spec, spec.init(model.init_seed), pools, paml, outer_steps, seed, &run);
        ctx.out << "meta-pretrained " << outer_steps << " steps over " << pools.size() << " families -> "
                << run.checkpoint_dir(outer_steps).string() << '\n';
        return kOk;
    }
};

struct FinetuneCmd {
    std::string checkpoint;
    std::vector<std::string> data;
    std::string mode = "regular";
    train::LoraOptions lora;
    TrainOpts train{300};
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
        app->add_option("--data", data, "Fine-tuning datasets")->required()->delimiter(',');
        app->add_option("--mode", mode, "regular or lora")->check(CLI::IsMember({"regular", "lora"}))->capture_default_str();
        app->add_option("--rank", lora.rank, "LoRA rank")->capture_default_str();
        app->add_option("--alpha", lora.alpha, "LoRA scale")->capture_default_str();
        app->add_option("--targets", lora.targets, "LoRA target matrices (default: attention projections)")->delimiter(',');
        train.add(app);
        app->add_option("--out", out, "Run directory")->required();
    }

    int run(Context& ctx) const {
        const auto base = load_model(checkpoint);
        const auto d = load_data(data);
        train::FinetuneConfig cfg;
        cfg.mode = train::finetune_mode_from_string(mode);
        cfg.train = train.cfg;
        cfg.lora = lora;
        cfg.train.validate();
        json s = {{"checkpoint", checkpoint}, {"data", data}, {"mode", mode}, {"model", model_json(base.spec)},
                  {"train", json::parse(train::to_json(cfg.train))}};
        if (cfg.mode == train::FinetuneMode::Lora) {
            s["rank"] = lora.rank;
            s["alpha"] = lora.alpha;
            s["targets"] = lora.targets.empty() ? base.spec.default_lora_targets() : lora.targets;
        }
        ctx.settings = s;
        write_config(ctx, out);
        auto run = train::RunDir::create(fs::path(out) / "run", ctx.settings.dump());
        const auto r = train::finetune(base.spec, base.params, d, cfg, {}, &run);
        const json extra = {{"model", model_json(base.spec)}, {"mode", mode}, {"source", checkpoint}};
        ad::save_checkpoint(r.params, fs::path(out) / "final", extra.dump());
        if (r.adapted) lora::save_adapters(*r.adapted, fs::path(out) / "adapters");
        ctx.out << "fine-tuned (" << mode << ", " << r.trainable_count << " trainable values) -> "
                << (fs::path(out) / "final").string() << '\n';
        return kOk;
    }
};

struct EvaluateCmd {
    std::string checkpoint;
    std::vector<std::string> data;
    std::size_t batch = 32;
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
        app->add_option("--data", data, "Test datasets")->required()->delimiter(',');
        app->add_option("--batch", batch, "Evaluation batch size")->capture_default_str();
        app->add_option("--out", out, "Output directory")->required();
    }

    int run(Context& ctx) const {
        const auto m = load_model(checkpoint);
        const auto d = load_data(data);
        ctx.settings = {{"checkpoint", checkpoint}, {"data", data}, {"batch", batch}, {"model", model_json(m.spec)},
                        {"checkpoint_hash", eval::param_hash(m.params)}};
        write_config(ctx, out);
        const auto errors = eval::evaluate(m.spec, ad::Weights::bind(m.params), d, batch);
        std::map<std::string, std::vector<double>> by_family;
        std::ofstream each(fs::path(out) / "errors.csv", std::ios::binary);
        each << "index,family,error_pct\n" << std::setprecision(17);
        for (std::size_t i = 0; i < errors.size(); ++i) {
            by_family[d.items[i].family].push_back(errors[i]);
            each << i << ',' << d.items[i].family << ',' << errors[i] << '\n';
        }
        std::vector<eval::ReportRow> rows;
        for (const auto& [fam, v] : by_family) {
            eval::ReportRow r;
            r.protocol = "evaluate";
            r.family = fam;
            r.method = train::to_string(m.spec.kind);
            r.error_pct = eval::mean_of(v);
            rows.push_back(r);
            ctx.out << fam << " rel_l2_pct " << r.error_pct << " (" << v.size() << " IOFPs)\n";
        }
        std::ofstream rep(fs::path(out) / "report.csv", std::ios::binary);
        rep << eval::report_csv(rows);
        return kOk;
    }
};

struct ProtocolCmd {
    std::string name;
    std::string settings;
    std::vector<std::uint64_t> seeds;
    std::string out;

    void add(CLI::App* app) {
        app->add_option("--name", name, "mol_vs_sol, scaling, paml_vs_tl or ft_size_sweep")
            ->required()->check(CLI::IsMember({"mol_vs_sol", "scaling", "paml_vs_tl", "ft_size_sweep"}));
        app->add_option("--settings", settings, "Protocol settings (JSON); missing keys keep desk defaults")
            ->check(CLI::ExistingFile);
        app->add_option("--seeds", seeds, "Override the seed list")->delimiter(',');
        app->add_option("--out", out, "Output directory")->required();
    }

    int run(Context& ctx) const {
        eval::ProtocolConfig cfg;
        if (!settings.empty()) {
            std::ifstream in(settings);
            std::stringstream ss;
            ss << in.rdbuf();
            cfg = eval::protocol_config_from_json(ss.str());
        }
        if (!seeds.empty()) cfg.seeds = seeds;
        const auto p = eval::protocol_from_string(name);
        cfg.validate(p);
        if (fs::exists(fs::path(out) / "report.csv")) throw ConfigError("output directory " + out + " already holds a report");
        ctx.settings = json::parse(eval::to_json(cfg));
        ctx.out << "config " << json({{"command", ctx.command}, {"protocol", name}, {"settings", ctx.settings}}).dump() << '\n';
        const auto rep = eval::run_protocol(p, cfg, out);
        ctx.out << "protocol " << name << ": " << rep.rows.size() << " cells, summary " << rep.summary << '\n';
        return kOk;
    }
};

struct InspectCmd {
    std::string path;

    void add(CLI::App* app) {
        app->add_option("path", path, "Checkpoint directory, dataset stem or generate/run directory")->required();
    }

    int run(Context& ctx) const {
        const fs::path p(path);
        auto dump = [&](const fs::path& f, const char* kind) {
            std::ifstream in(f, std::ios::binary);
            if (!in) throw DataError("cannot read " + f.string());
            std::stringstream ss;
            ss << in.rdbuf();
            json j;
            try {
                j = json::parse(ss.str());
            } catch (const json::exception& e) {
                throw DataError(f.string() + ": " + e.what());
            }
            ctx.out << kind << ' ' << f.string() << '\n' << j.dump(2) << '\n';
        };
        if (fs::exists(p / "manifest.json")) {
            const auto params = ad::load_checkpoint(p);
            dump(p / "manifest.json", "checkpoint");
            ctx.out << "parameters " << params.entries().size() << ", values " << params.count() << ", trainable "
                    << params.count(true) << '\n';
            return kOk;
        }
        const auto stem = dataset_stem(path);
        if (fs::exists(fs::path(stem.string() + ".manifest"))) {
            const auto d = pdelab::read_dataset(stem);
            dump(stem.string() + ".manifest", "dataset");
            ctx.out << "items " << d.size() << '\n';
            return kOk;
        }
        if (fs::exists(p / "config.json")) {
            dump(p / "config.json", "run");
            return kOk;
        }
        throw DataError("nothing to inspect at " + path);
    }
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"lemon: multi-operator PDE learning laboratory"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Settings file (TOML/INI; one [section] per subcommand)");
    std::string level = "warn";
    app.add_option("--log-level", level, "debug, info, warn, error or off")
        ->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}))->capture_default_str();
    app.set_version_flag("--version", "lemon 0.1.0");

    GenerateCmd gen;
    PretrainCmd pre;
    PamlCmd paml;
    FinetuneCmd ft;
    EvaluateCmd ev;
    ProtocolCmd proto;
    InspectCmd insp;
    gen.add(app.add_subcommand("generate", "Sample IOFP datasets from PDE families"));
    pre.add(app.add_subcommand("pretrain", "Standard multi-family pretraining"));
    paml.add(app.add_subcommand("paml-pretrain", "Meta-pretraining over family episodes"));
    ft.add(app.add_subcommand("finetune", "Regular or LoRA fine-tuning of a checkpoint"));
    ev.add(app.add_subcommand("evaluate", "Relative L2 error of a checkpoint on datasets"));
    proto.add(app.add_subcommand("protocol", "Run an evaluation protocol end to end"));
    insp.add(app.add_subcommand("inspect", "Print a dataset, checkpoint or run manifest"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        report_error(err, kUsage, "UsageError", e.what());
        return kUsage;
    }

    const std::map<std::string, log::Level> levels{{"debug", log::Level::Debug}, {"info", log::Level::Info},
                                                   {"warn", log::Level::Warn}, {"error", log::Level::Error},
                                                   {"off", log::Level::Off}};
    log::set_level(levels.at(level));
    auto* sub = app.get_subcommands().front();
    Context ctx{out, sub->get_name()};
    try {
        if (sub->get_name() == "generate") return gen.run(ctx);
        if (sub->get_name() == "pretrain") return pre.run(ctx);
        if (sub->get_name() == "paml-pretrain") return paml.run(ctx);
        if (sub->get_name() == "finetune") return ft.run(ctx);
        if (sub->get_name() == "evaluate") return ev.run(ctx);
        if (sub->get_name() == "protocol") return proto.run(ctx);
        return insp.run(ctx);
    } catch (const std::exception& e) {
        const int code = exit_code_for(e);
        report_error(err, code, type_name(e), e.what());
        return code;
    }
}

}  // namespace lemon::cli
