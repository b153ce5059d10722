#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lemon/autodiff/params.hpp"
#include "lemon/train/model.hpp"

namespace lemon::eval {

inline constexpr double kRelL2Eps = 1e-12;

/// 100 |pred_i - target_i|_2 / (|target_i|_2 + eps) for each example i along
/// the leading axis. DimensionError on a shape mismatch.
std::vector<double> rel_l2_percent_each(const ad::Tensor& pred, const ad::Tensor& target);
/// Mean of rel_l2_percent_each.
double rel_l2_percent(const ad::Tensor& pred, const ad::Tensor& target);

/// Per-example relative L2 errors (%) of a model on a dataset, in dataset order.
std::vector<double> evaluate(const train::ModelSpec& spec, const ad::Weights& w, const pdelab::Dataset& data,
                             std::size_t batch_size = 32);

/// Order-independent mean (values are summed in sorted order).
double mean_of(std::vector<double> v);
double median_of(std::vector<double> v);

/// One-sided sign test: P(X >= wins) for X ~ Binomial(n, 1/2).
double sign_test_p(int wins, int n);

/// FNV-1a over names, shapes and value bytes (traceability of checkpoints).
std::uint64_t param_hash(const ad::ParamStore& params);

}  // namespace lemon::eval
