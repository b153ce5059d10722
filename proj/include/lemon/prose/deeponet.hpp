#pragma once

#include <cstdint>

#include "lemon/autodiff/weights.hpp"
#include "lemon/prose/config.hpp"
#include "lemon/prose/model.hpp"

namespace lemon::prose {

ad::ParamStore init_deeponet(const DeepONetConfig& cfg, std::uint64_t seed);

/// dot(branch(ic), trunk(point)) + bias. ic [b x m] with m = n_t_in * n_x,
/// points [P x 2] holding (x / L, tau). Result [b x P].
ad::Var deeponet_forward(const DeepONetConfig& cfg, const ad::Weights& w, const ad::Var& ic, const ad::Tensor& points);

/// Query points (x_j / n_x, tau_k) in frame-major order.
ad::Tensor deeponet_points(const DeepONetConfig& cfg, std::span<const double> tau);

/// Batch adapter: predictions [b x n_t_out x n_x].
ad::Var deeponet_forward(const DeepONetConfig& cfg, const ad::Weights& w, const Batch& batch);

}  // namespace lemon::prose
