#include "lemon/autodiff/params.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "lemon/common/error.hpp"

namespace lemon::ad {

using json = nlohmann::json;

Var& ParamStore::add(const std::string& name, Tensor init, bool trainable) {
    if (contains(name)) throw ConfigError("parameter '" + name + "' already exists");
    params_.push_back({name, Var(std::move(init), trainable), trainable});
    return params_.back().var;
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return true;
    return false;
}

const Param& ParamStore::entry(const std::string& name) const {
    for (const auto& p : params_)
        if (p.name == name) return p;
    throw ConfigError("unknown parameter '" + name + "'");
}

Param& ParamStore::entry(const std::string& name) {
    return const_cast<Param&>(static_cast<const ParamStore&>(*this).entry(name));
}

const Var& ParamStore::get(const std::string& name) const { return entry(name).var; }

void ParamStore::set_trainable(const std::string& name, bool trainable) {
    auto& p = entry(name);
    p.trainable = trainable;
    p.var.node()->requires_grad = trainable;
}

void ParamStore::remove(const std::string& name) {
    for (auto it = params_.begin(); it != params_.end(); ++it) {
        if (it->name == name) {
            params_.erase(it);
            return;
        }
    }
    throw ConfigError("unknown parameter '" + name + "'");
}

std::size_t ParamStore::count(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (!trainable_only || p.trainable) n += p.var.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

ParamStore ParamStore::clone() const {
    ParamStore out;
    for (const auto& p : params_) out.add(p.name, p.var.value(), p.trainable);
    return out;
}

bool ParamStore::identical(const ParamStore& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& a = params_[i];
        const auto& b = other.params_[i];
        if (a.name != b.name || a.trainable != b.trainable || a.var.shape() != b.var.shape()) return false;
        const auto& x = a.var.value().data;
        const auto& y = b.var.value().data;
        if (!x.empty() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) != 0) return false;
    }
    return true;
}

void save_checkpoint(const ParamStore& params, const std::filesystem::path& dir, const std::string& extra_json) {
    std::filesystem::create_directories(dir);
    json entries = json::array();
    std::uint64_t offset = 0;
    std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
    for (const auto& p : params.entries()) {
        const auto& t = p.var.value();
        entries.push_back({{"name", p.name}, {"shape", t.shape}, {"trainable", p.trainable}, {"offset", offset},
                           {"count", t.size()}});
        for (double v : t.data) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
            bin.write(reinterpret_cast<const char*>(&bits), 8);
        }
        offset += t.size() * 8;
    }
    json extra;
    try {
        extra = json::parse(extra_json);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("checkpoint extra stanza is not JSON: ") + e.what());
    }
    const json manifest = {{"format", "lemon-checkpoint"}, {"version", kCheckpointFormatVersion},
                           {"dtype", "float64"},           {"endianness", "little"},
                           {"blob_bytes", offset},         {"params", entries},
                           {"extra", extra}};
    std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
    if (!bin) throw DataError("checkpoint: failed writing " + dir.string());
}

ParamStore load_checkpoint(const std::filesystem::path& dir, std::string* extra_json) {
    std::ifstream man(dir / "manifest.json");
    if (!man) throw DataError("checkpoint: missing manifest in " + dir.string());
    ParamStore store;
    try {
        const json m = json::parse(man);
        if (m.at("format").get<std::string>() != "lemon-checkpoint") throw DataError("checkpoint: unknown format tag");
        if (m.at("version").get<int>() != kCheckpointFormatVersion) {
            throw DataError("checkpoint: version mismatch (file " + std::to_string(m.at("version").get<int>()) +
                            ", reader " + std::to_string(kCheckpointFormatVersion) + ")");
        }
        const auto blob_bytes = m.at("blob_bytes").get<std::uint64_t>();
        std::ifstream bin(dir / "params.bin", std::ios::binary);
        std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
        if (blob.size() != blob_bytes) {
            throw DataError("checkpoint: blob is " + std::to_string(blob.size()) + " bytes, manifest says " +
                            std::to_string(blob_bytes));
        }
        for (const auto& e : m.at("params")) {
            const auto shape = e.at("shape").get<Shape>();
            const auto count = e.at("count").get<std::uint64_t>();
            const auto off = e.at("offset").get<std::uint64_t>();
            if (count != numel(shape) || off % 8 != 0 || off > blob_bytes || count * 8 > blob_bytes - off) {
                throw DataError("checkpoint: entry '" + e.at("name").get<std::string>() + "' is inconsistent");
            }
            Tensor t(shape);
            for (std::size_t i = 0; i < count; ++i) {
                std::uint64_t bits;
                std::memcpy(&bits, blob.data() + off + i * 8, 8);
                if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
                t.data[i] = std::bit_cast<double>(bits);
            }
            store.add(e.at("name").get<std::string>(), std::move(t), e.at("trainable").get<bool>());
        }
        if (extra_json) *extra_json = m.at("extra").dump();
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: malformed manifest: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("checkpoint: ") + e.what());
    }
    return store;
}

}  // namespace lemon::ad
