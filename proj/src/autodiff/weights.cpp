#include "lemon/autodiff/weights.hpp"

#include "lemon/common/error.hpp"

namespace lemon::ad {

Weights Weights::bind(const ParamStore& params) {
    Weights w;
    for (const auto& p : params.entries()) w.vars_.emplace(p.name, p.var);
    return w;
}

const Var& Weights::raw(const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw ConfigError("weights: no binding for '" + name + "'");
    return it->second;
}

Var Weights::get(const std::string& name) const {
    auto it = deltas_.find(name);
    if (it == deltas_.end()) return raw(name);
    const auto& d = it->second;
    return raw(name) + matmul(raw(d.a), raw(d.b)) * d.alpha;
}

void Weights::add_delta(const std::string& target, LowRankDelta delta) {
    const Var& w = raw(target);
    const Var& a = raw(delta.a);
    const Var& b = raw(delta.b);
    if (w.dim() != 2 || a.dim() != 2 || b.dim() != 2 || a.shape()[0] != w.shape()[0] || b.shape()[1] != w.shape()[1] ||
        a.shape()[1] != b.shape()[0]) {
        throw DimensionError("low-rank delta " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                             " does not fit weight '" + target + "' " + shape_str(w.shape()));
    }
    deltas_[target] = std::move(delta);
}

}  // namespace lemon::ad
