#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lemon/common/error.hpp"
#include "lemon/eval/metrics.hpp"
#include "lemon/eval/protocol.hpp"
#include "lemon/eval/zero_shot.hpp"

using namespace lemon;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

pdelab::Grid small_grid() {
    pdelab::Grid g;
    g.n_x = 32;
    g.n_t_in = 4;
    g.n_t_out = 4;
    return g;
}

train::ModelSpec tiny_spec() {
    auto s = train::ModelSpec::for_grid(train::ModelKind::Prose, small_grid());
    s.prose.d_model = 16;
    s.prose.n_heads = 2;
    s.prose.layers = {1, 1, 1, 1};
    s.prose.ffn_hidden = 32;
    return s;
}

eval::ProtocolConfig tiny_protocol() {
    eval::ProtocolConfig c;
    c.grid = small_grid();
    c.model.prose.d_model = 16;
    c.model.prose.n_heads = 2;
    c.model.prose.ffn_hidden = 32;
    c.sol.deeponet.width = 16;
    c.sol.deeponet.basis = 8;
    c.pretrain_families = {"DF", "AD", "DL", "KG"};
    c.heldout_families = {"DLo"};
    c.pretrain_nq = 3;
    c.pretrain_nu = 4;
    c.pretrain.steps = 20;
    c.finetune.train.steps = 8;
    c.sol_train.steps = 20;
    c.ft_nq = 2;
    c.ft_sizes = {2, 4, 6};
    c.n_ft = 4;
    c.test_nq = 3;
    c.test_nu = 2;
    c.riemann_families = {"InB", "InCub"};
    c.riemann_pool = 8;
    c.paml.support = 3;
    c.paml.query = 4;
    c.paml_outer_steps = 4;
    c.seeds = {0, 1};
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("lemon_eval_" + name);
    fs::remove_all(p);
    return p;
}

std::size_t csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n - 1;
}

}  // namespace

TEST_CASE("relative L2 percent") {
    const Tensor t({2, 3}, {1, 2, 3, -1, 0.5, 2});
    CHECK(eval::rel_l2_percent(t, t) == 0.0);
    Tensor twice = t;
    for (auto& v : twice.data) v *= 2;
    CHECK(eval::rel_l2_percent(twice, t) == doctest::Approx(100.0).epsilon(1e-12));

    // (1, 2, 3) against (1, 1, 1): 100 sqrt(5) / sqrt(3).
    const Tensor p({1, 3}, {1, 2, 3}), q({1, 3}, {1, 1, 1});
    CHECK(std::abs(eval::rel_l2_percent(p, q) - 100.0 * std::sqrt(5.0) / (std::sqrt(3.0) + 1e-12)) < 1e-12);
    const auto each = eval::rel_l2_percent_each(twice, t);
    REQUIRE(each.size() == 2);
    CHECK_THROWS_AS(eval::rel_l2_percent(p, t), DimensionError);
    // Zero target stays finite through the floor.
    CHECK(std::isfinite(eval::rel_l2_percent(p, Tensor({1, 3}))));
}

TEST_CASE("statistics helpers") {
    CHECK(eval::median_of({3, 1, 2}) == 2.0);
    CHECK(eval::median_of({4, 1, 2, 3}) == 2.5);
    CHECK(eval::mean_of({1, 2, 3}) == 2.0);
    CHECK(eval::sign_test_p(20, 20) == doctest::Approx(std::pow(0.5, 20)));
    CHECK(eval::sign_test_p(15, 20) == doctest::Approx(0.020694732666015625).epsilon(1e-9));
    CHECK(eval::sign_test_p(0, 5) == doctest::Approx(1.0));
    CHECK_THROWS_AS(eval::sign_test_p(6, 5), ConfigError);
}

TEST_CASE("evaluation does not depend on dataset order") {
    const auto spec = tiny_spec();
    const auto params = spec.init(2);
    auto d = pdelab::sample_dataset(pdelab::family("DF"), 5, 4, 1, small_grid());
    const double a = eval::mean_of(eval::evaluate(spec, ad::Weights::bind(params), d, 7));
    std::reverse(d.items.begin(), d.items.end());
    std::swap(d.items[2], d.items[11]);
    const double b = eval::mean_of(eval::evaluate(spec, ad::Weights::bind(params), d, 7));
    CHECK(std::abs(a - b) <= 1e-12 * a);
}

TEST_CASE("zero-shot evaluation") {
    const auto spec = tiny_spec();
    const auto& fam = pdelab::family("DLo");
    const auto qs = pdelab::sample_q_set(fam, 8, 3);
    const std::vector<std::vector<double>> ft(qs.begin(), qs.begin() + 3), test(qs.begin() + 3, qs.end());
    eval::ZeroShotConfig zc;
    zc.grid = small_grid();
    zc.n_u_ft = 4;
    zc.n_u_test = 3;
    zc.finetune.train.steps = 0;

    SUBCASE("overlapping q-sets are rejected") {
        CHECK_THROWS_AS(eval::zero_shot_eval(spec, spec.init(1), "DLo", ft, ft, zc), ProtocolError);
        auto mixed = test;
        mixed.push_back(ft[1]);
        CHECK_THROWS_AS(eval::zero_shot_eval(spec, spec.init(1), "DLo", ft, mixed, zc), ProtocolError);
    }
    SUBCASE("frozen checkpoint gives a finite baseline") {
        const auto r = eval::zero_shot_eval(spec, spec.init(1), "DLo", ft, test, zc);
        CHECK(std::isfinite(r.error_before));
        CHECK(r.error_before > 0.0);
        CHECK(r.error_after == r.error_before);
        CHECK(r.n_ft == 12);
        CHECK(r.n_test == 15);
        CHECK(r.ft_q == ft);
        CHECK(r.test_q == test);
    }
}

TEST_CASE("fine-tuning lowers the zero-shot error (median over 5 seeds)") {
    const auto spec = tiny_spec();
    const auto pretrain_data = pdelab::merge({pdelab::sample_dataset(pdelab::family("DF"), 8, 5, 1, small_grid()),
                                              pdelab::sample_dataset(pdelab::family("AD"), 8, 5, 2, small_grid())});
    std::vector<double> before, after;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        train::TrainConfig tc;
        tc.steps = 150;
        tc.lr = 3e-3;
        tc.seed = seed;
        const auto pre = train::pretrain(spec, spec.init(seed), pretrain_data, tc);
        const auto qs = pdelab::sample_q_set(pdelab::family("DLo"), 14, 100 + seed);
        eval::ZeroShotConfig zc;
        zc.grid = small_grid();
        zc.n_u_ft = 5;
        zc.n_u_test = 3;
        zc.seed = seed;
        zc.finetune.train.steps = 80;
        zc.finetune.train.lr = 2e-3;
        zc.finetune.train.seed = seed;
        const auto r = eval::zero_shot_eval(spec, pre.params, "DLo", {qs.begin(), qs.begin() + 4},
                                            {qs.begin() + 4, qs.end()}, zc);
        before.push_back(r.error_before);
        after.push_back(r.error_after);
    }
    INFO("before ", eval::median_of(before), " after ", eval::median_of(after));
    CHECK(eval::median_of(after) <= eval::median_of(before));
}

TEST_CASE("protocol config") {
    auto c = tiny_protocol();
    c.paml.order = train::PamlOrder::Second;
    c.finetune.mode = train::FinetuneMode::Lora;
    c.finetune.lora.rank = 3;
    const auto back = eval::protocol_config_from_json(eval::to_json(c));
    CHECK(eval::to_json(back) == eval::to_json(c));
    CHECK(back.finetune.lora.rank == 3);
    CHECK(back.grid == c.grid);

    auto bad = c;
    bad.ft_sizes = {3};
    CHECK_THROWS_AS(bad.validate(eval::Protocol::FtSizeSweep), ConfigError);
    bad = c;
    bad.family_counts = {5};
    CHECK_THROWS_AS(bad.validate(eval::Protocol::Scaling), ConfigError);
    bad = c;
    bad.riemann_families = {"DF"};
    CHECK_THROWS_AS(bad.validate(eval::Protocol::PamlVsTl), ConfigError);
    bad = c;
    bad.heldout_families = {c.pretrain_families.front()};
    CHECK_THROWS_AS(bad.validate(eval::Protocol::MolVsSol), ProtocolError);
    CHECK_THROWS_AS(eval::protocol_from_string("table9"), ConfigError);
    CHECK(eval::protocol_from_string("ft_size_sweep") == eval::Protocol::FtSizeSweep);
}

TEST_CASE("scaling protocol emits a two-column table") {
    const auto dir = scratch("scaling");
    auto c = tiny_protocol();
    c.family_counts = {1, 4};
    const auto rep = eval::run_protocol(eval::Protocol::Scaling, c, dir);
    CHECK(rep.rows.size() == 4);
    for (const auto& r : rep.rows) CHECK(std::isfinite(r.error_pct));
    const auto table = slurp(dir / "table.csv");
    CHECK(table.rfind("family,families=1@4,families=4@4\n", 0) == 0);
    CHECK(fs::exists(dir / "plots" / "scaling_DLo.dat"));
    const auto audit = nlohmann::json::parse(slurp(dir / "audit.json"));
    CHECK(audit["summary"]["DLo"]["sign_test"]["n"] == 2);
    fs::remove_all(dir);
}

TEST_CASE("mol_vs_sol emits paired cells with an audit trail") {
    const auto dir = scratch("mol");
    auto c = tiny_protocol();
    c.pretrain_families = {"DF", "AD"};
    const auto rep = eval::run_protocol(eval::Protocol::MolVsSol, c, dir);
    REQUIRE(rep.rows.size() == 4);
    for (std::uint64_t seed : {0, 1}) {
        int prose = 0, sol = 0;
        for (const auto& r : rep.rows) {
            if (r.seed != seed) continue;
            CHECK(std::isfinite(r.error_pct));
            prose += r.method == "prose-lite";
            sol += r.method == "deeponet-lite";
        }
        CHECK(prose == 1);
        CHECK(sol == 1);
    }
    const auto audit = nlohmann::json::parse(slurp(dir / "audit.json"));
    for (const auto& cell : audit["cells"]) {
        CHECK(fs::exists(dir / cell["checkpoint"].get<std::string>() / "params.bin"));
        CHECK(cell["test_q"].size() == 3);
        CHECK(cell["ft_q"].size() == 2);
        for (const auto& q : cell["test_q"]) {
            for (const auto& f : cell["ft_q"]) CHECK(q != f);
        }
    }
    CHECK(csv_rows(dir / "report.csv") == 4);
    CHECK(fs::exists(dir / "plots" / "mol_vs_sol.dat"));
    fs::remove_all(dir);
}

TEST_CASE("ft_size_sweep reports a trend flag and is reproducible") {
    const auto a = scratch("sweep_a"), b = scratch("sweep_b");
    auto c = tiny_protocol();
    const auto ra = eval::run_protocol(eval::Protocol::FtSizeSweep, c, a);
    eval::run_protocol(eval::Protocol::FtSizeSweep, c, b);
    CHECK(ra.rows.size() == 2 * (1 + 3));
    const auto summary = nlohmann::json::parse(ra.summary);
    const auto trend = summary["DLo"]["trend"].get<std::string>();
    CHECK((trend == "pass" || trend == "warn"));
    for (const char* f : {"report.csv", "audit.json", "table.csv", "config.json", "plots/ft_size_sweep_DLo.dat",
                          "checkpoints/mol_seed1/params.bin"}) {
        INFO(f);
        CHECK(slurp(a / f) == slurp(b / f));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("paml_vs_tl runs both pretraining regimes") {
    const auto dir = scratch("paml");
    auto c = tiny_protocol();
    c.seeds = {3};
    const auto rep = eval::run_protocol(eval::Protocol::PamlVsTl, c, dir);
    CHECK(rep.rows.size() == 4);
    CHECK(fs::exists(dir / "checkpoints" / "paml_seed3" / "params.bin"));
    CHECK(fs::exists(dir / "checkpoints" / "tl_seed3" / "params.bin"));
    const auto summary = nlohmann::json::parse(rep.summary);
    CHECK(summary["InB"].contains("sign_test"));
    fs::remove_all(dir);
}

TEST_CASE("a failing subrun leaves a partial report") {
    const auto dir = scratch("partial");
    auto c = tiny_protocol();
    c.seeds = {0};
    c.heldout_families = {"DLo", "PM"};  // PM has three operators only: q-sets collide
    CHECK_THROWS_AS(eval::run_protocol(eval::Protocol::Scaling, c, dir), ProtocolError);
    CHECK(fs::exists(dir / "PARTIAL"));
    CHECK(csv_rows(dir / "report.csv") == 1);
    CHECK(nlohmann::json::parse(slurp(dir / "audit.json"))["partial"] == true);
    fs::remove_all(dir);
}
