#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lemon/train/trainer.hpp"

namespace lemon::eval {

struct ZeroShotConfig {
    pdelab::Grid grid{};
    int n_u_ft = 10;    // ICs per fine-tune operator
    int n_u_test = 10;  // ICs per test operator
    train::FinetuneConfig finetune{};
    std::uint64_t seed = 0;
    std::size_t eval_batch = 32;
};

struct ZeroShotResult {
    std::string family;
    std::size_t n_ft = 0;
    std::size_t n_test = 0;
    double error_before = 0.0;  // mean relative L2 (%) of the checkpoint
    double error_after = 0.0;   // after fine-tuning
    std::vector<std::vector<double>> ft_q;
    std::vector<std::vector<double>> test_q;
    std::uint64_t ft_data_seed = 0;
    std::uint64_t test_data_seed = 0;
    std::uint64_t tuned_hash = 0;
};

/// Distinct operators (q vectors) of a dataset, in first-appearance order.
std::vector<std::vector<double>> operators_of(const pdelab::Dataset& d);

/// ProtocolError when an operator of `test` also appears in `ft`.
void check_disjoint(const std::vector<std::vector<double>>& ft, const std::vector<std::vector<double>>& test);

/// Fine-tunes on the given datasets and reports the test error before and
/// after. ProtocolError when any test operator occurs in the fine-tune data.
ZeroShotResult zero_shot_eval(const train::ModelSpec& spec, const ad::ParamStore& checkpoint,
                              const pdelab::Dataset& ft_data, const pdelab::Dataset& test_data,
                              const train::FinetuneConfig& ft, std::size_t eval_batch = 32);

/// Generates n_u_ft ICs per fine-tune operator and n_u_test per test
/// operator, then runs the dataset form. The q-set guard runs before any
/// data is generated.
ZeroShotResult zero_shot_eval(const train::ModelSpec& spec, const ad::ParamStore& checkpoint,
                              const std::string& family, const std::vector<std::vector<double>>& ft_q,
                              const std::vector<std::vector<double>>& test_q, const ZeroShotConfig& cfg);

}  // namespace lemon::eval
