#pragma once

#include <map>
#include <string>
#include <vector>

#include "lemon/autodiff/params.hpp"

namespace lemon::ad {

/// Low-rank delta on a matrix weight: W + alpha * A B.
struct LowRankDelta {
    std::string a;
    std::string b;
    double alpha = 1.0;
};

/// Name -> Var binding read by model forward passes. Inner-loop updates and
/// adapters substitute entries here without touching the ParamStore.
class Weights {
public:
    Weights() = default;
    /// Binds every parameter's leaf Var.
    static Weights bind(const ParamStore& params);

    void set(const std::string& name, Var v) { vars_[name] = std::move(v); }
    bool contains(const std::string& name) const { return vars_.count(name) != 0; }
    /// Stored Var, no delta applied. ConfigError for unknown names.
    const Var& raw(const std::string& name) const;
    /// Effective weight: raw(name) plus its low-rank delta when one is registered.
    Var get(const std::string& name) const;
    Var operator[](const std::string& name) const { return get(name); }

    void add_delta(const std::string& target, LowRankDelta delta);
    const std::map<std::string, LowRankDelta>& deltas() const noexcept { return deltas_; }
    const std::map<std::string, Var>& vars() const noexcept { return vars_; }

private:
    std::map<std::string, Var> vars_;
    std::map<std::string, LowRankDelta> deltas_;
};

}  // namespace lemon::ad
