#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lemon/autodiff/weights.hpp"

namespace lemon::lora {

/// Trainable delta on a frozen matrix W [m x n]: W' = W + alpha * A B with
/// A [m x r] and B [r x n].
struct LoraAdapter {
    std::string target;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t rank = 0;
    double alpha = 1.0;

    std::string a_name() const { return target + ".lora_A"; }
    std::string b_name() const { return target + ".lora_B"; }
    std::size_t param_count() const { return rank * (m + n); }

    friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;
};

/// Base parameters plus attached adapters. Targets are frozen; only the
/// adapter factors are trainable.
struct AdaptedParams {
    ad::ParamStore params;
    std::vector<LoraAdapter> adapters;

    /// Binding with the low-rank deltas applied.
    ad::Weights weights() const;
    /// Sum of r (m + n) over adapters.
    std::size_t adapter_param_count() const;
};

/// Clones `base`, freezes every other parameter and adds A = 0, B ~ N(0, 0.02)
/// for each target, so the adapted model starts identical to the base.
/// ConfigError for unknown or non-matrix targets, duplicate targets, or a
/// rank outside [1, min(m, n)].
AdaptedParams attach(const ad::ParamStore& base, const std::vector<std::string>& targets, int rank, double alpha,
                     std::uint64_t seed);

/// Plain store with W' = W + alpha A B materialized and adapter factors
/// removed. Every remaining parameter is trainable again.
ad::ParamStore merge(const AdaptedParams& adapted);

/// Binding of `params` with the given deltas applied (names must exist).
ad::Weights bind(const ad::ParamStore& params, const std::vector<LoraAdapter>& adapters);

/// Adapter list as JSON text (for checkpoint stanzas) and back.
std::string to_json(const std::vector<LoraAdapter>& adapters);
std::vector<LoraAdapter> adapters_from_json(const std::string& text);

/// Adapter-only checkpoint: the A and B factors plus the adapter list.
void save_adapters(const AdaptedParams& adapted, const std::filesystem::path& dir);
/// Applies a saved adapter checkpoint to `base`. DataError when a target is
/// missing from the base or its shape differs from the recorded one.
AdaptedParams load_adapters(const ad::ParamStore& base, const std::filesystem::path& dir);

}  // namespace lemon::lora
