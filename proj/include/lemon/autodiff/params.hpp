#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "lemon/autodiff/var.hpp"

namespace lemon::ad {

struct Param {
    std::string name;
    Var var;  // leaf; requires_grad mirrors `trainable`
    bool trainable = true;
};

/// Ordered named parameters. Names are unique.
class ParamStore {
public:
    ParamStore() = default;

    /// ConfigError on a duplicate name.
    Var& add(const std::string& name, Tensor init, bool trainable = true);
    bool contains(const std::string& name) const;
    /// ConfigError for unknown names.
    const Var& get(const std::string& name) const;
    Param& entry(const std::string& name);
    const Param& entry(const std::string& name) const;
    const std::vector<Param>& entries() const noexcept { return params_; }
    std::vector<Param>& entries() noexcept { return params_; }
    void set_trainable(const std::string& name, bool trainable);
    void remove(const std::string& name);

    /// Number of scalar values, all or trainable only.
    std::size_t count(bool trainable_only = false) const;
    void zero_grad();
    /// Deep copy with fresh leaves.
    ParamStore clone() const;
    /// True when names, shapes, flags and every value bit match.
    bool identical(const ParamStore& other) const;

private:
    std::vector<Param> params_;
};

/// Writes dir/manifest.json (names, shapes, flags, offsets, `extra_json`)
/// and dir/params.bin (little-endian float64, manifest order).
void save_checkpoint(const ParamStore& params, const std::filesystem::path& dir, const std::string& extra_json = "{}");
/// DataError on a missing or inconsistent checkpoint. `extra_json`
/// receives the stored extra stanza when non-null.
ParamStore load_checkpoint(const std::filesystem::path& dir, std::string* extra_json = nullptr);

inline constexpr int kCheckpointFormatVersion = 1;

}  // namespace lemon::ad
