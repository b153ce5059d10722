#pragma once

#include <cstdint>
#include <vector>

#include "lemon/autodiff/params.hpp"
#include "lemon/autodiff/weights.hpp"
#include "lemon/common/rng.hpp"
#include "lemon/train/paml.hpp"

namespace lemon::train::toy {

/// y = amplitude * sin(x + phase).
struct SineTask {
    double amplitude = 1.0;
    double phase = 0.0;

    double operator()(double x) const;
};

/// amplitude ~ U[0.1, 5], phase ~ U[0, pi].
SineTask sample_sine_task(Rng& rng);

struct Samples {
    ad::Tensor x;  // [n x 1]
    ad::Tensor y;  // [n x 1]
};

/// n points with x ~ U[-5, 5].
Samples sine_samples(const SineTask& task, std::size_t n, Rng& rng);

/// Fully connected ReLU network with the given layer widths (input first).
ad::ParamStore init_mlp(const std::vector<std::size_t>& widths, std::uint64_t seed);
ad::Var mlp_forward(const ad::Weights& w, std::size_t layers, const ad::Var& x);
ad::Var mse(const ad::Var& pred, const ad::Tensor& y);

struct SineExperiment {
    std::vector<std::size_t> widths{1, 40, 40, 1};
    std::size_t shots = 10;          // support points per task
    std::size_t query = 10;          // query points per task during meta-training
    long meta_steps = 3000;
    PamlConfig paml{};               // inner loop used during meta-training
    double pretrain_lr = 1e-3;       // Adam, pooled tasks
    int adapt_steps = 10;            // SGD steps on a held-out task
    double adapt_lr = 0.01;
    std::size_t eval_tasks = 50;     // held-out tasks averaged per seed
    std::size_t eval_points = 100;

    SineExperiment();
};

struct SineOutcome {
    double paml_loss = 0.0;      // held-out MSE after adaptation, PAML init
    double pretrain_loss = 0.0;  // same, plain pretraining init
};

/// Meta-trains and pretrains from the same initialization with the same
/// number of task draws, then adapts both to identical held-out tasks.
SineOutcome run_sine_experiment(const SineExperiment& cfg, std::uint64_t seed);

}  // namespace lemon::train::toy
