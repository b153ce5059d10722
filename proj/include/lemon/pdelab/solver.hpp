#pragma once

#include <span>
#include <vector>

#include "lemon/pdelab/family.hpp"
#include "lemon/pdelab/grid.hpp"

namespace lemon::pdelab {

struct SolveOptions {
    /// Upper bound on the internal time step; 0 lets the solver choose.
    double dt_max = 0.0;
    /// Step-halving retries after a non-finite or blown-up state.
    int max_refinements = 3;
    /// |u| above this counts as a blow-up.
    double blowup = 1e6;
};

/// Trajectory of `fam` from u0 sampled at `times` (ascending, >= 0) on a
/// uniform grid of u0.size() points over [0, L_x). Row i is u(., times[i]).
///
/// Bindings: exact spectral translation (AD, WV); second-order central
/// method of lines with RK4 (DF, KG, SG, PM); Fourier pseudo-spectral with
/// integrating-factor RK4 (KdV, CH); finite volume with Strang-split
/// reaction (diffusion-reaction); MUSCL/Godunov finite volume with SSP-RK3
/// (conservation laws); conservative drift-diffusion differences (FP).
///
/// Throws SolverError when the state stays non-finite after refinement.
Frames solve_at(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0, double L_x,
                std::span<const double> times, Boundary boundary, const SolveOptions& opts = {});

/// Trajectory at grid.frame_times() (input frames then output frames).
Frames solve(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0, const Grid& grid,
             const SolveOptions& opts = {});

/// Exact translation u0(x - shift) of periodic samples by Fourier interpolation.
std::vector<double> spectral_shift(std::span<const double> u0, double L_x, double shift);

}  // namespace lemon::pdelab
