#include "lemon/eval/zero_shot.hpp"

#include <set>

#include "lemon/common/error.hpp"
#include "lemon/common/rng.hpp"
#include "lemon/eval/metrics.hpp"

namespace lemon::eval {

namespace {

std::string q_str(const std::vector<double>& q) {
    std::string s = "(";
    for (std::size_t i = 0; i < q.size(); ++i) s += (i ? ", " : "") + std::to_string(q[i]);
    return s + ")";
}

}  // namespace

std::vector<std::vector<double>> operators_of(const pdelab::Dataset& d) {
    std::vector<std::vector<double>> out;
    std::set<std::vector<double>> seen;
    for (const auto& it : d.items) {
        if (seen.insert(it.q).second) out.push_back(it.q);
    }
    return out;
}

void check_disjoint(const std::vector<std::vector<double>>& ft, const std::vector<std::vector<double>>& test) {
    const std::set<std::vector<double>> f(ft.begin(), ft.end());
    for (const auto& q : test) {
        if (f.count(q)) throw ProtocolError("zero-shot: test operator q = " + q_str(q) + " is also in the fine-tune set");
    }
}

ZeroShotResult zero_shot_eval(const train::ModelSpec& spec, const ad::ParamStore& checkpoint,
                              const pdelab::Dataset& ft_data, const pdelab::Dataset& test_data,
                              const train::FinetuneConfig& ft, std::size_t eval_batch) {
    if (test_data.items.empty()) throw DataError("zero-shot: empty test set");
    ZeroShotResult r;
    r.family = test_data.items.front().family;
    r.ft_q = operators_of(ft_data);
    r.test_q = operators_of(test_data);
    check_disjoint(r.ft_q, r.test_q);
    r.n_ft = ft_data.items.size();
    r.n_test = test_data.items.size();
    r.error_before = mean_of(evaluate(spec, ad::Weights::bind(checkpoint), test_data, eval_batch));
    if (ft.train.steps == 0 || ft_data.items.empty()) {
        r.error_after = r.error_before;
        r.tuned_hash = param_hash(checkpoint);
        return r;
    }
    const auto tuned = train::finetune(spec, checkpoint, ft_data, ft);
    r.error_after = mean_of(evaluate(spec, ad::Weights::bind(tuned.params), test_data, eval_batch));
    r.tuned_hash = param_hash(tuned.params);
    return r;
}

ZeroShotResult zero_shot_eval(const train::ModelSpec& spec, const ad::ParamStore& checkpoint,
                              const std::string& family, const std::vector<std::vector<double>>& ft_q,
                              const std::vector<std::vector<double>>& test_q, const ZeroShotConfig& cfg) {
    check_disjoint(ft_q, test_q);
    const auto& fam = pdelab::family(family);
    const auto ft_seed = derive_seed(cfg.seed, stable_hash(family), 0xf7);
    const auto test_seed = derive_seed(cfg.seed, stable_hash(family), 0x7e57);
    pdelab::Dataset ft_data;
    ft_data.grid = cfg.grid;
    if (!ft_q.empty() && cfg.n_u_ft > 0) ft_data = pdelab::sample_dataset_for(fam, ft_q, cfg.n_u_ft, ft_seed, cfg.grid);
    const auto test_data = pdelab::sample_dataset_for(fam, test_q, cfg.n_u_test, test_seed, cfg.grid);
    auto r = zero_shot_eval(spec, checkpoint, ft_data, test_data, cfg.finetune, cfg.eval_batch);
    r.ft_data_seed = ft_seed;
    r.test_data_seed = test_seed;
    return r;
}

}  // namespace lemon::eval
