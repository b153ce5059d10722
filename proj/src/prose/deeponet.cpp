#include "lemon/prose/deeponet.hpp"

#include <cmath>

#include "lemon/common/error.hpp"
#include "lemon/common/rng.hpp"

namespace lemon::prose {

using ad::Tensor;
using ad::Var;

namespace {

void add_linear(ad::ParamStore& ps, Rng& rng, const std::string& name, std::size_t in, std::size_t out) {
    Tensor w({in, out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : w.data) v = rng.uniform(-bound, bound);
    ps.add(name + ".W", std::move(w));
    ps.add(name + ".b", Tensor({out}));
}

/// GELU MLP; the last layer is linear.
Var mlp(const ad::Weights& w, const std::string& net, int layers, Var x) {
    for (int i = 0; i < layers; ++i) {
        const std::string p = net + ".L" + std::to_string(i);
        x = matmul(x, w[p + ".W"]) + w[p + ".b"];
        if (i + 1 < layers) x = gelu(x);
    }
    return x;
}

}  // namespace

ad::ParamStore init_deeponet(const DeepONetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ad::ParamStore ps;
    Rng rng(seed);
    const auto width = static_cast<std::size_t>(cfg.width);
    const auto p = static_cast<std::size_t>(cfg.basis);
    const auto m = static_cast<std::size_t>(cfg.n_t_in * cfg.n_x);
    for (const auto& [net, in] : {std::pair<std::string, std::size_t>{"branch", m}, {"trunk", 2}}) {
        std::size_t prev = in;
        for (int i = 0; i < cfg.depth; ++i) {
            add_linear(ps, rng, net + ".L" + std::to_string(i), prev, width);
            prev = width;
        }
        add_linear(ps, rng, net + ".L" + std::to_string(cfg.depth), prev, p);
    }
    ps.add("bias", Tensor::scalar(0.0));
    return ps;
}

Var deeponet_forward(const DeepONetConfig& cfg, const ad::Weights& w, const Var& ic, const Tensor& points) {
    const auto m = static_cast<std::size_t>(cfg.n_t_in * cfg.n_x);
    if (ic.dim() != 2 || ic.shape()[1] != m) {
        throw DimensionError("deeponet: branch input " + ad::shape_str(ic.shape()) + ", expected [b x " +
                             std::to_string(m) + "]");
    }
    if (points.dim() != 2 || points.shape[1] != 2) {
        throw DimensionError("deeponet: query points " + ad::shape_str(points.shape) + ", expected [P x 2]");
    }
    const Var branch = mlp(w, "branch", cfg.depth + 1, ic);
    const Var trunk = mlp(w, "trunk", cfg.depth + 1, Var(points));
    return matmul(branch, transpose(trunk)) + w["bias"];
}

Tensor deeponet_points(const DeepONetConfig& cfg, std::span<const double> tau) {
    const auto nx = static_cast<std::size_t>(cfg.n_x);
    Tensor pts({tau.size() * nx, 2});
    for (std::size_t k = 0; k < tau.size(); ++k) {
        for (std::size_t j = 0; j < nx; ++j) {
            pts.data[(k * nx + j) * 2] = static_cast<double>(j) / static_cast<double>(nx);
            pts.data[(k * nx + j) * 2 + 1] = tau[k];
        }
    }
    return pts;
}

Var deeponet_forward(const DeepONetConfig& cfg, const ad::Weights& w, const Batch& batch) {
    const auto nx = static_cast<std::size_t>(cfg.n_x);
    const auto nin = static_cast<std::size_t>(cfg.n_t_in);
    if (batch.inputs.shape != ad::Shape{batch.size, nin, nx} || batch.tau.size() != static_cast<std::size_t>(cfg.n_t_out)) {
        throw DimensionError("deeponet: batch " + ad::shape_str(batch.inputs.shape) + " does not match the model grid");
    }
    const Var ic(Tensor({batch.size, nin * nx}, batch.inputs.data));
    const Var out = deeponet_forward(cfg, w, ic, deeponet_points(cfg, batch.tau));
    return reshape(out, {batch.size, static_cast<std::size_t>(cfg.n_t_out), nx});
}

}  // namespace lemon::prose
