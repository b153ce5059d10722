#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lemon/train/paml.hpp"
#include "lemon/train/trainer.hpp"

namespace lemon::eval {

enum class Protocol { MolVsSol, Scaling, PamlVsTl, FtSizeSweep };

std::string to_string(Protocol p);
/// mol_vs_sol, scaling, paml_vs_tl or ft_size_sweep; ConfigError otherwise.
Protocol protocol_from_string(const std::string& s);

/// Desk-scale protocol settings. Model frame counts follow `grid`.
struct ProtocolConfig {
    pdelab::Grid grid{};
    train::ModelSpec model{};  // MOL model (PROSE-lite)
    train::ModelSpec sol{};    // SOL baseline (DeepONet-lite)

    std::vector<std::string> pretrain_families{"DF", "AD", "DL", "WV"};
    std::vector<std::string> heldout_families{"DLo"};
    int pretrain_nq = 25;  // operators per pretraining family
    int pretrain_nu = 10;  // ICs per operator
    train::TrainConfig pretrain{};
    train::FinetuneConfig finetune{};

    int ft_nq = 10;  // sparse fine-tune operator set
    std::vector<int> ft_sizes{20, 50, 100};
    int n_ft = 100;  // fine-tune IOFPs outside the size sweep
    int test_nq = 50;
    int test_nu = 10;

    /// SOL training: sol_factor times the MOL fine-tune data of the held-out family.
    int sol_factor = 1;
    train::TrainConfig sol_train{};

    std::vector<int> family_counts{1, 4};

    std::vector<std::string> riemann_families{"InB", "InCub", "InSin", "InCos"};
    std::string source_wave = "shock";  // pretraining wave type; the other one is the target
    int riemann_pool = 60;              // source IOFPs per family
    train::PamlConfig paml{};
    long paml_outer_steps = 300;

    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::size_t eval_batch = 32;

    ProtocolConfig();
    /// ConfigError on inconsistent settings (e.g. sizes not divisible by ft_nq).
    void validate(Protocol p) const;
    /// Model specs with frame counts and vocabulary taken from the grid.
    train::ModelSpec resolved_model() const;
    train::ModelSpec resolved_sol() const;
};

std::string to_json(const ProtocolConfig& c);
/// Accepts to_json output; missing keys keep their defaults.
ProtocolConfig protocol_config_from_json(const std::string& text);

/// One cell of a report, with its audit trail.
struct ReportRow {
    std::string protocol;
    std::string family;
    std::string method;
    std::uint64_t seed = 0;
    std::size_t n_ft = 0;
    double error_pct = 0.0;
    double error_before_pct = 0.0;
    std::size_t n_test = 0;
    std::string checkpoint;             // pretrained checkpoint directory (relative to the run)
    std::uint64_t checkpoint_hash = 0;
    std::uint64_t tuned_hash = 0;
    std::uint64_t ft_data_seed = 0;
    std::uint64_t test_data_seed = 0;
    std::vector<std::vector<double>> ft_q;
    std::vector<std::vector<double>> test_q;
};

struct EvalReport {
    Protocol protocol = Protocol::FtSizeSweep;
    std::uint64_t config_hash = 0;
    std::vector<ReportRow> rows;
    /// Trend and sign-test summary (JSON object text).
    std::string summary = "{}";
    bool partial = false;
    double wall_seconds = 0.0;
};

/// Long-format report.csv rows: protocol,family,method,seed,n_ft,error_pct.
std::string report_csv(const std::vector<ReportRow>& rows);
/// Median over seeds of error_pct for (family, method, n_ft).
double median_error(const std::vector<ReportRow>& rows, const std::string& family, const std::string& method,
                    std::size_t n_ft);

/// Runs a protocol and writes out_dir/{config.json, report.csv, audit.json,
/// plots/<name>.dat, timing.json} plus pretrained checkpoints. A failing
/// subrun writes the rows finished so far with a PARTIAL marker and rethrows.
/// Everything except timing.json is bit-identical for identical config.
EvalReport run_protocol(Protocol p, const ProtocolConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace lemon::eval
