#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lemon/exprtree/polish.hpp"
#include "lemon/pdelab/family.hpp"
#include "lemon/pdelab/grid.hpp"
#include "lemon/pdelab/solver.hpp"

namespace lemon::pdelab {

/// Input/output function pair for one concrete operator.
struct IOFP {
    std::string family;
    std::vector<double> q;
    double horizon = 1.0;       // family T; frame times follow from the dataset grid
    double domain_length = 1.0; // family L_x
    std::vector<float> input;   // [n_t_in x n_x]
    std::vector<float> output;  // [n_t_out x n_x]
    expr::SymbolSequence symbols;

    /// Bitwise comparison of the float blobs.
    friend bool operator==(const IOFP& a, const IOFP& b);
};

struct FamilyCount {
    std::string family;
    int n_q = 0;
    int n_u = 0;
    std::uint64_t seed = 0;
    std::string ic_mode = "default";  // "default", "shock" or "rarefaction"

    friend bool operator==(const FamilyCount&, const FamilyCount&) = default;
};

struct Dataset {
    Grid grid;
    std::vector<FamilyCount> families;
    std::vector<IOFP> items;

    std::size_t size() const { return items.size(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SampleOptions {
    ParamDistribution q_dist{};
    SolveOptions solve{};
    int max_attempts = 5;  // per IOFP, then hard error
    int threads = 1;
};

/// Algorithm "Data Sampling": N_q operators q ~ D_q, N_u initial conditions
/// each, solved on `base` (resolved per family). Deterministic in
/// (seed, family id, counts) and independent of `threads`.
Dataset sample_dataset(const PDEFamily& fam, int n_q, int n_u, std::uint64_t seed, const Grid& base,
                       const SampleOptions& opts = {});

/// Same, for a given list of operators (one q vector each).
Dataset sample_dataset_for(const PDEFamily& fam, const std::vector<std::vector<double>>& qs, int n_u,
                           std::uint64_t seed, const Grid& base, const SampleOptions& opts = {});

/// N draws of q ~ D_q for zero-shot protocols.
std::vector<std::vector<double>> sample_q_set(const PDEFamily& fam, int n_q, std::uint64_t seed,
                                              const ParamDistribution& dist = {});

enum class RiemannType { Shock, Rarefaction };

/// Shock iff the characteristic speeds converge, q f'(u_L) > q f'(u_R).
RiemannType classify_riemann(const PDEFamily& fam, double ul, double ur);

/// Riemann problems on [0, L_x) with the jump at the midpoint, states in
/// [0, 1] with |u_L - u_R| >= 0.2, filtered to the requested wave type and
/// solved with homogeneous Neumann boundaries. One q ~ D_q per draw.
Dataset riemann_dataset(const PDEFamily& fam, RiemannType type, int n, std::uint64_t seed, const Grid& base,
                        const SampleOptions& opts = {});

/// Concatenates datasets that share a grid.
Dataset merge(const std::vector<Dataset>& parts);

/// Writes stem.manifest (JSON text), stem.bin (little-endian float32 blobs in
/// record order) and stem.sym (one Polish token line per operator).
void write_dataset(const Dataset& d, const std::filesystem::path& stem);
/// Validates the manifest (version, offsets, sizes) before touching blobs.
/// DataError on any mismatch.
Dataset read_dataset(const std::filesystem::path& stem);

inline constexpr int kDatasetFormatVersion = 1;

}  // namespace lemon::pdelab
