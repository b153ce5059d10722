#pragma once

#include <span>
#include <vector>

#include "lemon/common/rng.hpp"
#include "lemon/pdelab/grid.hpp"

namespace lemon::pdelab {

struct SineMode {
    int n = 1;             // wave number index, k = 2*pi*n/L_x
    double amplitude = 0;  // A in [0, 1]
    double phase = 0;      // phi in (0, 2*pi)
};

struct GaussianBump {
    double amplitude = 1;
    double mean = 0.5;
    double sigma = 0.1;
};

/// Initial-condition parameters s.
struct ICSpec {
    enum class Kind { Sinusoid, Gaussian, Riemann };
    Kind kind = Kind::Sinusoid;

    // Sinusoid superposition.
    std::vector<SineMode> modes;
    int n_max = 2;
    bool abs_with_sign = false;  // u <- sign * |u|
    double sign = 1.0;
    bool window = false;         // smooth bump over the central 80% of the domain

    // Gaussian sum.
    std::vector<GaussianBump> bumps;

    // Riemann step at split * L_x.
    double left = 0.0;
    double right = 0.0;
    double split = 0.5;
};

/// u0(x_j) = sum_i A_i sin(k_i x_j + phi_i), then the optional post-ops.
/// DomainError if some n_i is outside [1, n_max].
std::vector<double> ic_sine(const ICSpec& s, const Grid& grid);
/// u0(x_j) = sum_i A_i exp(-|x_j - mu_i|^2 / (2 sigma_i^2)). DomainError if sigma_i <= 0.
std::vector<double> ic_gaussian(const ICSpec& s, const Grid& grid);
std::vector<double> ic_riemann(const ICSpec& s, const Grid& grid);
/// Dispatches on s.kind.
std::vector<double> make_ic(const ICSpec& s, const Grid& grid);

/// Window applied by the sinusoid post-op: ~1 on [0.1, 0.9] L_x, ~0 at the ends.
double window_function(double x, double L_x);

/// Removes the linear trend l(x) = (u[n-1] - u[0]) / (x[n-1] - x[0]) * (x - x[0]);
/// afterwards the first and last samples are equal.
std::vector<double> periodize(std::span<const double> u0);

struct Normalization {
    enum class Mode { None, Range, Probability };
    Mode mode = Mode::None;
    double u_max = 1.0;
    double margin = 0.01;  // range mode maps [min, max] onto [margin, 1 - margin] * u_max
};

/// Range mode: affine map into (0, u_max). Probability mode: divide by the sum.
/// NormalizationError on degenerate input.
std::vector<double> normalize(std::span<const double> u0, const Normalization& norm);

/// Draw s ~ D_s for the sinusoid generator. `post_ops` enables the 10%
/// abs-with-sign and window transforms.
ICSpec sample_sine_ic(Rng& rng, int n_modes, int n_max, bool post_ops);
ICSpec sample_gaussian_ic(Rng& rng, int n_bumps, double L_x);

}  // namespace lemon::pdelab
