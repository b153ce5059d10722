#include "lemon/train/model.hpp"

#include "json.hpp"
#include "lemon/common/error.hpp"
#include "lemon/pdelab/family.hpp"
#include "lemon/prose/deeponet.hpp"

namespace lemon::train {

using json = nlohmann::json;

namespace {

const expr::Vocabulary& vocabulary() {
    static const expr::Vocabulary v = pdelab::registry_vocabulary();
    return v;
}

}  // namespace

std::string to_string(ModelKind k) { return k == ModelKind::Prose ? "prose" : "deeponet"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "prose") return ModelKind::Prose;
    if (s == "deeponet") return ModelKind::DeepONet;
    throw ConfigError("unknown model kind '" + s + "' (expected prose or deeponet)");
}

ModelSpec ModelSpec::for_grid(ModelKind kind, const pdelab::Grid& grid) {
    ModelSpec s;
    s.kind = kind;
    s.prose.n_x = s.deeponet.n_x = grid.n_x;
    s.prose.n_t_in = s.deeponet.n_t_in = grid.n_t_in;
    s.prose.n_t_out = s.deeponet.n_t_out = grid.n_t_out;
    s.prose.vocab_size = static_cast<int>(vocabulary().size());
    return s;
}

void ModelSpec::validate() const {
    if (kind == ModelKind::Prose) {
        prose.validate();
    } else {
        deeponet.validate();
    }
}

void ModelSpec::check_grid(const pdelab::Grid& g) const {
    const int nx = kind == ModelKind::Prose ? prose.n_x : deeponet.n_x;
    const int nin = kind == ModelKind::Prose ? prose.n_t_in : deeponet.n_t_in;
    const int nout = kind == ModelKind::Prose ? prose.n_t_out : deeponet.n_t_out;
    if (g.n_x != nx || g.n_t_in != nin || g.n_t_out != nout) {
        throw DataError("dataset grid (n_x " + std::to_string(g.n_x) + ", n_t_in " + std::to_string(g.n_t_in) +
                        ", n_t_out " + std::to_string(g.n_t_out) + ") does not match the model (" +
                        std::to_string(nx) + ", " + std::to_string(nin) + ", " + std::to_string(nout) + ")");
    }
    if (kind == ModelKind::Prose && prose.vocab_size != static_cast<int>(vocabulary().size())) {
        throw DataError("model vocabulary size " + std::to_string(prose.vocab_size) + " differs from the operator vocabulary (" +
                        std::to_string(vocabulary().size()) + ")");
    }
}

ad::ParamStore ModelSpec::init(std::uint64_t seed) const {
    validate();
    return kind == ModelKind::Prose ? prose::init_params(prose, seed) : prose::init_deeponet(deeponet, seed);
}

prose::Batch ModelSpec::batch(const pdelab::Dataset& data, std::span<const std::size_t> idx) const {
    return prose::make_batch(data, idx, kind == ModelKind::Prose ? &vocabulary() : nullptr);
}

ad::Var ModelSpec::forward(const ad::Weights& w, const prose::Batch& b) const {
    return kind == ModelKind::Prose ? prose::forward(prose, w, b) : prose::deeponet_forward(deeponet, w, b);
}

ad::Var ModelSpec::loss(const ad::Weights& w, const prose::Batch& b) const {
    return prose::rel_sq_error(forward(w, b), b.targets);
}

std::vector<std::string> ModelSpec::default_lora_targets() const {
    if (kind == ModelKind::Prose) return prose::attention_weight_names(prose);
    std::vector<std::string> out;
    for (const char* net : {"branch", "trunk"}) {
        for (int l = 1; l < deeponet.depth + 1; ++l) out.push_back(std::string(net) + ".L" + std::to_string(l) + ".W");
    }
    return out;
}

std::string to_json(const ModelSpec& s) {
    const json j = {{"kind", to_string(s.kind)},
                    {"prose", json::parse(prose::to_json(s.prose))},
                    {"deeponet", json::parse(prose::to_json(s.deeponet))}};
    return j.dump();
}

ModelSpec model_spec_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model spec: ") + e.what());
    }
    ModelSpec s;
    if (!j.is_object()) throw ConfigError("model spec: expected an object");
    if (j.contains("kind")) {
        if (!j["kind"].is_string()) throw ConfigError("model spec: kind must be a string");
        s.kind = model_kind_from_string(j["kind"].get<std::string>());
    }
    if (j.contains("prose")) s.prose = prose::prose_config_from_json(j["prose"].dump());
    if (j.contains("deeponet")) s.deeponet = prose::deeponet_config_from_json(j["deeponet"].dump());
    return s;
}

}  // namespace lemon::train
