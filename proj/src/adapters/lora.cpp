#include "lemon/adapters/lora.hpp"

#include <set>

#include "json.hpp"
#include "lemon/common/error.hpp"
#include "lemon/common/rng.hpp"

namespace lemon::lora {

using json = nlohmann::json;
using ad::Tensor;

ad::Weights bind(const ad::ParamStore& params, const std::vector<LoraAdapter>& adapters) {
    auto w = ad::Weights::bind(params);
    for (const auto& a : adapters) w.add_delta(a.target, {a.a_name(), a.b_name(), a.alpha});
    return w;
}

ad::Weights AdaptedParams::weights() const { return bind(params, adapters); }

std::size_t AdaptedParams::adapter_param_count() const {
    std::size_t n = 0;
    for (const auto& a : adapters) n += a.param_count();
    return n;
}

AdaptedParams attach(const ad::ParamStore& base, const std::vector<std::string>& targets, int rank, double alpha,
                     std::uint64_t seed) {
    AdaptedParams out;
    out.params = base.clone();
    for (const auto& p : base.entries()) out.params.set_trainable(p.name, false);
    std::set<std::string> seen;
    Rng rng(seed);
    for (const auto& t : targets) {
        if (!base.contains(t)) throw ConfigError("lora: unknown target '" + t + "'");
        if (!seen.insert(t).second) throw ConfigError("lora: target '" + t + "' listed twice");
        const auto& shape = base.get(t).shape();
        if (shape.size() != 2) throw ConfigError("lora: target '" + t + "' is not a matrix " + ad::shape_str(shape));
        LoraAdapter a{t, shape[0], shape[1], 0, alpha};
        if (rank < 1 || static_cast<std::size_t>(rank) > std::min(a.m, a.n)) {
            throw ConfigError("lora: rank " + std::to_string(rank) + " outside [1, " +
                              std::to_string(std::min(a.m, a.n)) + "] for '" + t + "'");
        }
        a.rank = static_cast<std::size_t>(rank);
        Tensor b({a.rank, a.n});
        for (auto& v : b.data) v = rng.normal(0.0, 0.02);
        out.params.add(a.a_name(), Tensor({a.m, a.rank}));
        out.params.add(a.b_name(), std::move(b));
        out.adapters.push_back(std::move(a));
    }
    return out;
}

ad::ParamStore merge(const AdaptedParams& adapted) {
    std::set<std::string> factor_names;
    for (const auto& a : adapted.adapters) {
        factor_names.insert(a.a_name());
        factor_names.insert(a.b_name());
    }
    const auto w = adapted.weights();
    ad::ParamStore out;
    ad::NoGradGuard off;
    for (const auto& p : adapted.params.entries()) {
        if (factor_names.count(p.name)) continue;
        out.add(p.name, w.get(p.name).value(), true);
    }
    return out;
}

std::string to_json(const std::vector<LoraAdapter>& adapters) {
    json arr = json::array();
    for (const auto& a : adapters) {
        arr.push_back({{"target", a.target}, {"m", a.m}, {"n", a.n}, {"rank", a.rank}, {"alpha", a.alpha}});
    }
    return arr.dump();
}

std::vector<LoraAdapter> adapters_from_json(const std::string& text) {
    std::vector<LoraAdapter> out;
    try {
        for (const auto& e : json::parse(text)) {
            out.push_back({e.at("target").get<std::string>(), e.at("m").get<std::size_t>(), e.at("n").get<std::size_t>(),
                           e.at("rank").get<std::size_t>(), e.at("alpha").get<double>()});
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("lora: malformed adapter list: ") + e.what());
    }
    return out;
}

void save_adapters(const AdaptedParams& adapted, const std::filesystem::path& dir) {
    ad::ParamStore factors;
    for (const auto& a : adapted.adapters) {
        factors.add(a.a_name(), adapted.params.get(a.a_name()).value());
        factors.add(a.b_name(), adapted.params.get(a.b_name()).value());
    }
    const json extra = {{"kind", "lora-adapters"}, {"adapters", json::parse(to_json(adapted.adapters))}};
    ad::save_checkpoint(factors, dir, extra.dump());
}

AdaptedParams load_adapters(const ad::ParamStore& base, const std::filesystem::path& dir) {
    std::string extra;
    const auto factors = ad::load_checkpoint(dir, &extra);
    std::vector<LoraAdapter> adapters;
    try {
        const json j = json::parse(extra);
        if (j.value("kind", "") != "lora-adapters") throw DataError("lora: " + dir.string() + " is not an adapter checkpoint");
        adapters = adapters_from_json(j.at("adapters").dump());
    } catch (const json::exception& e) {
        throw DataError(std::string("lora: malformed adapter checkpoint: ") + e.what());
    }
    AdaptedParams out;
    out.params = base.clone();
    for (const auto& p : base.entries()) out.params.set_trainable(p.name, false);
    for (const auto& a : adapters) {
        if (!base.contains(a.target)) throw DataError("lora: base has no parameter '" + a.target + "'");
        if (base.get(a.target).shape() != ad::Shape{a.m, a.n}) {
            throw DataError("lora: base '" + a.target + "' is " + ad::shape_str(base.get(a.target).shape()) +
                            ", adapter expects [" + std::to_string(a.m) + ", " + std::to_string(a.n) + "]");
        }
        if (!factors.contains(a.a_name()) || !factors.contains(a.b_name())) {
            throw DataError("lora: adapter checkpoint lacks the factors of '" + a.target + "'");
        }
        const auto& A = factors.get(a.a_name()).value();
        const auto& B = factors.get(a.b_name()).value();
        if (A.shape != ad::Shape{a.m, a.rank} || B.shape != ad::Shape{a.rank, a.n}) {
            throw DataError("lora: factor shapes for '" + a.target + "' disagree with the adapter list");
        }
        out.params.add(a.a_name(), A);
        out.params.add(a.b_name(), B);
        out.adapters.push_back(a);
    }
    return out;
}

}  // namespace lemon::lora
