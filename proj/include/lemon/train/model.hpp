#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lemon/autodiff/weights.hpp"
#include "lemon/pdelab/dataset.hpp"
#include "lemon/prose/config.hpp"
#include "lemon/prose/model.hpp"

namespace lemon::train {

enum class ModelKind { Prose, DeepONet };

std::string to_string(ModelKind k);
/// "prose" or "deeponet"; ConfigError otherwise.
ModelKind model_kind_from_string(const std::string& s);

/// Architecture choice plus its hyperparameters. Only the config matching
/// `kind` is used.
struct ModelSpec {
    ModelKind kind = ModelKind::Prose;
    prose::ProseConfig prose{};
    prose::DeepONetConfig deeponet{};

    /// Spec whose frame counts match `grid`; the PROSE vocabulary size is
    /// taken from the operator vocabulary.
    static ModelSpec for_grid(ModelKind kind, const pdelab::Grid& grid);

    void validate() const;
    /// DataError when the dataset grid disagrees with the model input/output sizes.
    void check_grid(const pdelab::Grid& grid) const;

    ad::ParamStore init(std::uint64_t seed) const;
    prose::Batch batch(const pdelab::Dataset& data, std::span<const std::size_t> idx) const;
    ad::Var forward(const ad::Weights& w, const prose::Batch& b) const;
    /// Relative squared error of the batch predictions (training loss).
    ad::Var loss(const ad::Weights& w, const prose::Batch& b) const;
    /// Matrices adapted by LoRA when no targets are given: attention
    /// projections for PROSE-lite, hidden layers for DeepONet-lite.
    std::vector<std::string> default_lora_targets() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

std::string to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const std::string& text);

}  // namespace lemon::train
