#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "lemon/autodiff/params.hpp"

namespace lemon::train {

struct LogRow {
    long step = 0;
    double lr = 0.0;
    double loss = 0.0;
    double grad_norm = 0.0;

    friend bool operator==(const LogRow&, const LogRow&) = default;
};

/// Run directory: config.json, checkpoints/step_<k>/, log.csv and, for
/// meta-training, episodes.log.
class RunDir {
public:
    /// Creates the layout and writes `config_json` verbatim. ConfigError when
    /// the directory already holds a run.
    static RunDir create(const std::filesystem::path& root, const std::string& config_json);

    const std::filesystem::path& root() const noexcept { return root_; }
    std::filesystem::path checkpoint_dir(long step) const;

    void log(const LogRow& row);
    void episode(const std::string& line);
    void checkpoint(long step, const ad::ParamStore& params, const std::string& extra_json = "{}") const;

private:
    explicit RunDir(std::filesystem::path root);

    std::filesystem::path root_;
    std::ofstream log_;
    std::ofstream episodes_;
};

}  // namespace lemon::train
