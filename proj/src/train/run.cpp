#include "lemon/train/run.hpp"

#include <iomanip>

#include "lemon/common/error.hpp"

namespace lemon::train {

namespace fs = std::filesystem;

RunDir::RunDir(fs::path root) : root_(std::move(root)) {}

RunDir RunDir::create(const fs::path& root, const std::string& config_json) {
    if (fs::exists(root / "config.json")) throw ConfigError("run directory " + root.string() + " already holds a run");
    fs::create_directories(root / "checkpoints");
    {
        std::ofstream cfg(root / "config.json", std::ios::binary);
        cfg << config_json << '\n';
        if (!cfg) throw DataError("cannot write " + (root / "config.json").string());
    }
    RunDir r(root);
    r.log_.open(root / "log.csv", std::ios::binary);
    if (!r.log_) throw DataError("cannot write " + (root / "log.csv").string());
    r.log_ << "step,lr,loss,grad_norm\n";
    return r;
}

fs::path RunDir::checkpoint_dir(long step) const { return root_ / "checkpoints" / ("step_" + std::to_string(step)); }

void RunDir::log(const LogRow& row) {
    log_ << row.step << ',' << std::setprecision(17) << row.lr << ',' << row.loss << ',' << row.grad_norm << '\n';
    log_.flush();
}

void RunDir::episode(const std::string& line) {
    if (!episodes_.is_open()) {
        episodes_.open(root_ / "episodes.log", std::ios::binary);
        if (!episodes_) throw DataError("cannot write " + (root_ / "episodes.log").string());
    }
    episodes_ << line << '\n';
    episodes_.flush();
}

void RunDir::checkpoint(long step, const ad::ParamStore& params, const std::string& extra_json) const {
    ad::save_checkpoint(params, checkpoint_dir(step), extra_json);
}

}  // namespace lemon::train
