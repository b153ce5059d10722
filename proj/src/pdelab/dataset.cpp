#include "lemon/pdelab/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "lemon/common/error.hpp"

namespace lemon::pdelab {

using json = nlohmann::json;

bool operator==(const IOFP& a, const IOFP& b) {
    auto same = [](const std::vector<float>& x, const std::vector<float>& y) {
        return x.size() == y.size() && (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) == 0);
    };
    return a.family == b.family && a.q == b.q && a.horizon == b.horizon && a.domain_length == b.domain_length &&
           same(a.input, b.input) && same(a.output, b.output) && a.symbols == b.symbols;
}

namespace {

constexpr std::uint64_t kStreamQ = 0x71;
constexpr std::uint64_t kStreamIC = 0x75;
constexpr std::uint64_t kStreamRiemann = 0x72;

/// Runs job(i) for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
template <class Job>
void parallel_for(std::size_t n, int threads, Job job) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) job(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= n || failed.load()) return;
                try {
                    job(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    failed = true;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

/// Family IC policy: draw s, evaluate, periodize Gaussians, normalize.
std::vector<double> draw_ic(const PDEFamily& fam, Rng& rng, const Grid& g) {
    std::vector<double> u0;
    if (fam.ic == ICSpec::Kind::Gaussian) {
        u0 = periodize(ic_gaussian(sample_gaussian_ic(rng, 1, g.L_x), g));
    } else {
        u0 = ic_sine(sample_sine_ic(rng, 2, 2, fam.ic_post_ops), g);
    }
    if (fam.normalization.mode == Normalization::Mode::Probability) {
        // Periodized tails can dip slightly below zero.
        const double lift = std::max(0.0, -*std::min_element(u0.begin(), u0.end()));
        for (auto& v : u0) v += lift;
    }
    return normalize(u0, fam.normalization);
}

IOFP make_iofp(const PDEFamily& fam, std::span<const double> q, const Grid& g, const Frames& traj,
               const expr::SymbolSequence& symbols) {
    IOFP item;
    item.family = fam.id;
    item.q.assign(q.begin(), q.end());
    item.horizon = g.T;
    item.domain_length = g.L_x;
    const auto nx = static_cast<std::size_t>(g.n_x);
    const auto nin = static_cast<std::size_t>(g.n_t_in);
    const auto nout = static_cast<std::size_t>(g.n_t_out);
    item.input.resize(nin * nx);
    item.output.resize(nout * nx);
    for (std::size_t i = 0; i < nin; ++i)
        for (std::size_t j = 0; j < nx; ++j) item.input[i * nx + j] = static_cast<float>(traj(i, j));
    for (std::size_t i = 0; i < nout; ++i)
        for (std::size_t j = 0; j < nx; ++j) item.output[i * nx + j] = static_cast<float>(traj(nin + i, j));
    for (float v : item.input)
        if (!std::isfinite(v)) throw SolverError(fam.id + ": non-finite value after float conversion");
    for (float v : item.output)
        if (!std::isfinite(v)) throw SolverError(fam.id + ": non-finite value after float conversion");
    item.symbols = symbols;
    return item;
}

void check_counts(int a, int b, const char* what) {
    if (a < 1 || b < 1) throw ConfigError(std::string(what) + ": counts must be at least 1");
}

}  // namespace

std::vector<std::vector<double>> sample_q_set(const PDEFamily& fam, int n_q, std::uint64_t seed,
                                              const ParamDistribution& dist) {
    if (n_q < 0) throw ConfigError("sample_q_set: negative count");
    std::vector<std::vector<double>> qs;
    const auto h = stable_hash(fam.id);
    for (int i = 0; i < n_q; ++i) {
        Rng rng(derive_seed(seed, h, kStreamQ, static_cast<std::uint64_t>(i)));
        qs.push_back(fam.sample_params(rng, dist));
    }
    return qs;
}

Dataset sample_dataset_for(const PDEFamily& fam, const std::vector<std::vector<double>>& qs, int n_u,
                           std::uint64_t seed, const Grid& base, const SampleOptions& opts) {
    check_counts(static_cast<int>(qs.size()), n_u, "sample_dataset");
    base.validate();
    const Grid g = fam.resolve(base);
    std::vector<expr::SymbolSequence> symbols;
    for (const auto& q : qs) symbols.push_back(expr::to_polish(family_to_tree(fam, q)));

    const auto h = stable_hash(fam.id);
    const auto nu = static_cast<std::size_t>(n_u);
    std::vector<IOFP> items(qs.size() * nu);
    parallel_for(items.size(), opts.threads, [&](std::size_t k) {
        const std::size_t qi = k / nu;
        const std::size_t ui = k % nu;
        std::string last;
        for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
            Rng rng(derive_seed(seed, h ^ kStreamIC, qi, ui * 1024 + static_cast<std::uint64_t>(attempt)));
            try {
                const auto u0 = draw_ic(fam, rng, g);
                const auto traj = solve(fam, qs[qi], u0, g, opts.solve);
                items[k] = make_iofp(fam, qs[qi], g, traj, symbols[qi]);
                return;
            } catch (const SolverError& e) {
                last = e.what();
            } catch (const NormalizationError& e) {
                last = e.what();
            }
        }
        throw SolverError(fam.id + ": IOFP " + std::to_string(k) + " failed after " +
                          std::to_string(opts.max_attempts) + " attempts: " + last);
    });

    Dataset d;
    d.grid = base;
    d.families.push_back({fam.id, static_cast<int>(qs.size()), n_u, seed, "default"});
    d.items = std::move(items);
    return d;
}

Dataset sample_dataset(const PDEFamily& fam, int n_q, int n_u, std::uint64_t seed, const Grid& base,
                       const SampleOptions& opts) {
    check_counts(n_q, n_u, "sample_dataset");
    return sample_dataset_for(fam, sample_q_set(fam, n_q, seed, opts.q_dist), n_u, seed, base, opts);
}

RiemannType classify_riemann(const PDEFamily& fam, double ul, double ur) {
    if (!fam.has_flux()) throw ConfigError(fam.id + ": Riemann problems need a flux family");
    const Flux f{fam.flux};
    return f.df(ul) > f.df(ur) ? RiemannType::Shock : RiemannType::Rarefaction;
}

Dataset riemann_dataset(const PDEFamily& fam, RiemannType type, int n, std::uint64_t seed, const Grid& base,
                        const SampleOptions& opts) {
    if (!fam.has_flux()) throw ConfigError(fam.id + ": Riemann problems need a flux family");
    check_counts(n, 1, "riemann_dataset");
    base.validate();
    const Grid g = fam.resolve(base);
    const auto h = stable_hash(fam.id);
    const auto times = g.frame_times();
    std::vector<IOFP> items(static_cast<std::size_t>(n));
    parallel_for(items.size(), opts.threads, [&](std::size_t k) {
        std::string last;
        for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
            Rng rng(derive_seed(seed, h ^ kStreamRiemann, static_cast<std::uint64_t>(type),
                                k * 1024 + static_cast<std::uint64_t>(attempt)));
            const auto q = fam.sample_params(rng, opts.q_dist);
            ICSpec s;
            s.kind = ICSpec::Kind::Riemann;
            // Rejection sampling of the two states; the bound keeps a
            // degenerate flux from looping forever.
            bool found = false;
            for (int tries = 0; tries < 10000 && !found; ++tries) {
                s.left = rng.uniform();
                s.right = rng.uniform();
                found = std::abs(s.left - s.right) >= 0.2 && classify_riemann(fam, s.left, s.right) == type;
            }
            if (!found) throw DataError(fam.id + ": cannot draw Riemann states of the requested type");
            try {
                const auto u0 = ic_riemann(s, g);
                const auto traj = solve_at(fam, q, u0, g.L_x, times, Boundary::Neumann, opts.solve);
                items[k] = make_iofp(fam, q, g, traj, expr::to_polish(family_to_tree(fam, q)));
                return;
            } catch (const SolverError& e) {
                last = e.what();
            }
        }
        throw SolverError(fam.id + ": Riemann IOFP failed after retries: " + last);
    });
    Dataset d;
    d.grid = base;
    d.families.push_back({fam.id, n, 1, seed, type == RiemannType::Shock ? "shock" : "rarefaction"});
    d.items = std::move(items);
    return d;
}

Dataset merge(const std::vector<Dataset>& parts) {
    Dataset out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i == 0) {
            out.grid = parts[i].grid;
        } else if (!(parts[i].grid == out.grid)) {
            throw DataError("merge: datasets have different grids");
        }
        out.families.insert(out.families.end(), parts[i].families.begin(), parts[i].families.end());
        out.items.insert(out.items.end(), parts[i].items.begin(), parts[i].items.end());
    }
    return out;
}

// ---------------------------------------------------------------- serialization

namespace {

json grid_to_json(const Grid& g) {
    return {{"n_x", g.n_x}, {"L_x", g.L_x}, {"n_t_in", g.n_t_in}, {"n_t_out", g.n_t_out},
            {"T", g.T},     {"split_fraction", g.split_fraction}};
}

Grid grid_from_json(const json& j) {
    Grid g;
    g.n_x = j.at("n_x").get<int>();
    g.L_x = j.at("L_x").get<double>();
    g.n_t_in = j.at("n_t_in").get<int>();
    g.n_t_out = j.at("n_t_out").get<int>();
    g.T = j.at("T").get<double>();
    g.split_fraction = j.at("split_fraction").get<double>();
    return g;
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
    auto p = stem;
    p += ext;
    return p;
}

void put_floats(std::ostream& os, const std::vector<float>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
    } else {
        for (float f : v) {
            auto bits = std::bit_cast<std::uint32_t>(f);
            bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
            os.write(reinterpret_cast<const char*>(&bits), 4);
        }
    }
}

void get_floats(const std::vector<char>& blob, std::uint64_t offset, std::size_t count, std::vector<float>& out) {
    out.resize(count);
    if (count == 0) return;
    std::memcpy(out.data(), blob.data() + offset, count * sizeof(float));
    if constexpr (std::endian::native != std::endian::little) {
        for (auto& f : out) {
            auto bits = std::bit_cast<std::uint32_t>(f);
            bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
            f = std::bit_cast<float>(bits);
        }
    }
}

}  // namespace

void write_dataset(const Dataset& d, const std::filesystem::path& stem) {
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    const auto nx = static_cast<std::size_t>(d.grid.n_x);
    const std::size_t in_count = static_cast<std::size_t>(d.grid.n_t_in) * nx;
    const std::size_t out_count = static_cast<std::size_t>(d.grid.n_t_out) * nx;

    std::vector<std::string> lines;
    std::map<std::string, std::size_t> line_index;
    json records = json::array();
    std::uint64_t offset = 0;
    for (const auto& it : d.items) {
        if (it.input.size() != in_count || it.output.size() != out_count) {
            throw DataError("write_dataset: IOFP shape does not match the dataset grid");
        }
        const auto text = expr::to_text(it.symbols);
        auto [pos, inserted] = line_index.emplace(text, lines.size());
        if (inserted) lines.push_back(text);
        records.push_back({{"family", it.family},
                           {"q", it.q},
                           {"horizon", it.horizon},
                           {"domain_length", it.domain_length},
                           {"operator", pos->second},
                           {"input_offset", offset},
                           {"input_count", in_count},
                           {"output_offset", offset + in_count * sizeof(float)},
                           {"output_count", out_count}});
        offset += (in_count + out_count) * sizeof(float);
    }
    json families = json::array();
    for (const auto& f : d.families) {
        families.push_back({{"family", f.family}, {"n_q", f.n_q}, {"n_u", f.n_u}, {"seed", f.seed}, {"ic_mode", f.ic_mode}});
    }
    json manifest = {{"format", "lemon-dataset"},
                     {"version", kDatasetFormatVersion},
                     {"dtype", "float32"},
                     {"endianness", "little"},
                     {"grid", grid_to_json(d.grid)},
                     {"families", families},
                     {"operators", lines.size()},
                     {"blob_bytes", offset},
                     {"records", records}};

    std::ofstream bin(with_ext(stem, ".bin"), std::ios::binary | std::ios::trunc);
    for (const auto& it : d.items) {
        put_floats(bin, it.input);
        put_floats(bin, it.output);
    }
    std::ofstream sym(with_ext(stem, ".sym"), std::ios::trunc);
    for (const auto& l : lines) sym << l << '\n';
    std::ofstream man(with_ext(stem, ".manifest"), std::ios::trunc);
    man << manifest.dump(2) << '\n';
    if (!bin || !sym || !man) throw DataError("write_dataset: failed writing " + stem.string());
}

Dataset read_dataset(const std::filesystem::path& stem) {
    const auto man_path = with_ext(stem, ".manifest");
    std::ifstream man(man_path);
    if (!man) throw DataError("read_dataset: missing manifest " + man_path.string());
    json m;
    try {
        m = json::parse(man);
    } catch (const json::exception& e) {
        throw DataError(std::string("read_dataset: manifest is not valid JSON: ") + e.what());
    }

    Dataset d;
    std::vector<json> recs;
    std::uint64_t blob_bytes = 0;
    std::size_t n_ops = 0;
    try {
        if (m.at("format").get<std::string>() != "lemon-dataset") throw DataError("read_dataset: unknown format tag");
        const int version = m.at("version").get<int>();
        if (version != kDatasetFormatVersion) {
            throw DataError("read_dataset: version mismatch (file " + std::to_string(version) + ", reader " +
                            std::to_string(kDatasetFormatVersion) + ")");
        }
        if (m.at("dtype").get<std::string>() != "float32" || m.at("endianness").get<std::string>() != "little") {
            throw DataError("read_dataset: unsupported element type");
        }
        d.grid = grid_from_json(m.at("grid"));
        for (const auto& f : m.at("families")) {
            d.families.push_back({f.at("family").get<std::string>(), f.at("n_q").get<int>(), f.at("n_u").get<int>(),
                                  f.at("seed").get<std::uint64_t>(), f.at("ic_mode").get<std::string>()});
        }
        blob_bytes = m.at("blob_bytes").get<std::uint64_t>();
        n_ops = m.at("operators").get<std::size_t>();
        for (const auto& r : m.at("records")) recs.push_back(r);
    } catch (const json::exception& e) {
        throw DataError(std::string("read_dataset: malformed manifest: ") + e.what());
    }
    try {
        d.grid.validate();
    } catch (const ConfigError& e) {
        throw DataError(std::string("read_dataset: bad grid: ") + e.what());
    }

    // Validate every record against the grid and the blob layout first.
    const auto nx = static_cast<std::uint64_t>(d.grid.n_x);
    const std::uint64_t in_count = static_cast<std::uint64_t>(d.grid.n_t_in) * nx;
    const std::uint64_t out_count = static_cast<std::uint64_t>(d.grid.n_t_out) * nx;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        std::uint64_t io, ic, oo, oc, op;
        try {
            io = r.at("input_offset").get<std::uint64_t>();
            ic = r.at("input_count").get<std::uint64_t>();
            oo = r.at("output_offset").get<std::uint64_t>();
            oc = r.at("output_count").get<std::uint64_t>();
            op = r.at("operator").get<std::uint64_t>();
        } catch (const json::exception& e) {
            throw DataError("read_dataset: record " + std::to_string(i) + ": " + e.what());
        }
        if (ic != in_count || oc != out_count) {
            throw DataError("read_dataset: record " + std::to_string(i) + " shape does not match the grid");
        }
        if (op >= n_ops) throw DataError("read_dataset: record " + std::to_string(i) + " operator index out of range");
        for (auto [off, cnt] : {std::pair{io, ic}, std::pair{oo, oc}}) {
            if (off % sizeof(float) != 0 || off > blob_bytes || cnt * sizeof(float) > blob_bytes - off) {
                throw DataError("read_dataset: record " + std::to_string(i) + " offset " + std::to_string(off) +
                                " outside the blob");
            }
            spans.emplace_back(off, off + cnt * sizeof(float));
        }
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].first < spans[i - 1].second) throw DataError("read_dataset: overlapping blob offsets");
    }

    std::vector<std::string> lines;
    {
        std::ifstream sym(with_ext(stem, ".sym"));
        if (!sym && n_ops > 0) throw DataError("read_dataset: missing symbol file");
        std::string line;
        while (std::getline(sym, line)) lines.push_back(line);
        if (lines.size() != n_ops) throw DataError("read_dataset: symbol file line count differs from manifest");
    }

    std::vector<char> blob;
    {
        std::ifstream bin(with_ext(stem, ".bin"), std::ios::binary);
        if (!bin && blob_bytes > 0) throw DataError("read_dataset: missing blob file");
        blob.assign(std::istreambuf_iterator<char>(bin), std::istreambuf_iterator<char>());
        if (blob.size() != blob_bytes) {
            throw DataError("read_dataset: blob is " + std::to_string(blob.size()) + " bytes, manifest says " +
                            std::to_string(blob_bytes));
        }
    }

    for (const auto& r : recs) {
        IOFP it;
        it.family = r.at("family").get<std::string>();
        it.q = r.at("q").get<std::vector<double>>();
        it.horizon = r.at("horizon").get<double>();
        it.domain_length = r.at("domain_length").get<double>();
        it.symbols = expr::from_text(lines[r.at("operator").get<std::size_t>()]);
        get_floats(blob, r.at("input_offset").get<std::uint64_t>(), in_count, it.input);
        get_floats(blob, r.at("output_offset").get<std::uint64_t>(), out_count, it.output);
        d.items.push_back(std::move(it));
    }
    return d;
}

}  // namespace lemon::pdelab
