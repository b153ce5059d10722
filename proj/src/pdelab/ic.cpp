#include "lemon/pdelab/ic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lemon/common/error.hpp"

namespace lemon::pdelab {

std::vector<double> ic_sine(const ICSpec& s, const Grid& grid) {
    if (s.kind != ICSpec::Kind::Sinusoid) throw DomainError("ic_sine: spec is not a sinusoid superposition");
    for (const auto& m : s.modes) {
        if (m.n < 1 || m.n > s.n_max) {
            throw DomainError("ic_sine: mode index " + std::to_string(m.n) + " outside [1, " +
                              std::to_string(s.n_max) + "]");
        }
    }
    const auto xs = grid.x();
    std::vector<double> u(xs.size(), 0.0);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        double acc = 0.0;
        for (const auto& m : s.modes) {
            const double k = 2.0 * std::numbers::pi * m.n / grid.L_x;
            acc += m.amplitude * std::sin(k * xs[j] + m.phase);
        }
        if (s.abs_with_sign) acc = s.sign * std::abs(acc);
        if (s.window) acc *= window_function(xs[j], grid.L_x);
        u[j] = acc;
    }
    return u;
}

std::vector<double> ic_gaussian(const ICSpec& s, const Grid& grid) {
    if (s.kind != ICSpec::Kind::Gaussian) throw DomainError("ic_gaussian: spec is not a Gaussian sum");
    for (const auto& b : s.bumps) {
        if (!(b.sigma > 0.0)) throw DomainError("ic_gaussian: sigma must be positive");
    }
    const auto xs = grid.x();
    std::vector<double> u(xs.size(), 0.0);
    for (std::size_t j = 0; j < xs.size(); ++j) {
        double acc = 0.0;
        for (const auto& b : s.bumps) {
            const double r = xs[j] - b.mean;
            acc += b.amplitude * std::exp(-(r * r) / (2.0 * b.sigma * b.sigma));
        }
        u[j] = acc;
    }
    return u;
}

std::vector<double> ic_riemann(const ICSpec& s, const Grid& grid) {
    if (s.kind != ICSpec::Kind::Riemann) throw DomainError("ic_riemann: spec is not a Riemann step");
    const auto xs = grid.x();
    std::vector<double> u(xs.size());
    const double cut = s.split * grid.L_x;
    for (std::size_t j = 0; j < xs.size(); ++j) u[j] = xs[j] < cut ? s.left : s.right;
    return u;
}

std::vector<double> make_ic(const ICSpec& s, const Grid& grid) {
    switch (s.kind) {
        case ICSpec::Kind::Sinusoid:
            return ic_sine(s, grid);
        case ICSpec::Kind::Gaussian:
            return ic_gaussian(s, grid);
        case ICSpec::Kind::Riemann:
            return ic_riemann(s, grid);
    }
    return {};
}

double window_function(double x, double L_x) {
    const double width = 0.02 * L_x;
    return 0.5 * (std::tanh((x - 0.1 * L_x) / width) - std::tanh((x - 0.9 * L_x) / width));
}

std::vector<double> periodize(std::span<const double> u0) {
    std::vector<double> out(u0.begin(), u0.end());
    const std::size_t n = u0.size();
    if (n < 2) return out;
    const double rise = u0[n - 1] - u0[0];
    for (std::size_t j = 0; j < n; ++j) out[j] -= rise * static_cast<double>(j) / static_cast<double>(n - 1);
    // Pin the last sample so the endpoint equality is exact.
    out[n - 1] = out[0];
    return out;
}

std::vector<double> normalize(std::span<const double> u0, const Normalization& norm) {
    std::vector<double> out(u0.begin(), u0.end());
    switch (norm.mode) {
        case Normalization::Mode::None:
            return out;
        case Normalization::Mode::Range: {
            if (u0.empty()) throw NormalizationError("range normalization of an empty array");
            const auto [mn, mx] = std::minmax_element(u0.begin(), u0.end());
            if (!(*mx > *mn)) throw NormalizationError("range normalization needs max > min");
            const double lo = norm.margin * norm.u_max;
            const double span = (1.0 - 2.0 * norm.margin) * norm.u_max;
            for (auto& v : out) v = lo + span * (v - *mn) / (*mx - *mn);
            return out;
        }
        case Normalization::Mode::Probability: {
            double sum = 0.0;
            for (double v : u0) {
                if (v < 0.0) throw NormalizationError("probability normalization needs non-negative values");
                sum += v;
            }
            if (!(sum > 0.0)) throw NormalizationError("probability normalization needs a positive sum");
            for (auto& v : out) v /= sum;
            return out;
        }
    }
    return out;
}

ICSpec sample_sine_ic(Rng& rng, int n_modes, int n_max, bool post_ops) {
    ICSpec s;
    s.kind = ICSpec::Kind::Sinusoid;
    s.n_max = n_max;
    for (int i = 0; i < n_modes; ++i) {
        SineMode m;
        m.n = static_cast<int>(rng.uniform_int(1, n_max));
        m.amplitude = rng.uniform();
        double phi = 0.0;
        while (phi == 0.0) phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
        m.phase = phi;
        s.modes.push_back(m);
    }
    // Both transforms are drawn even when disabled so the stream layout is
    // the same for every family.
    const bool use_abs = rng.bernoulli(0.1);
    const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
    const bool use_window = rng.bernoulli(0.1);
    if (post_ops) {
        s.abs_with_sign = use_abs;
        s.sign = sign;
        s.window = use_window;
    }
    return s;
}

ICSpec sample_gaussian_ic(Rng& rng, int n_bumps, double L_x) {
    ICSpec s;
    s.kind = ICSpec::Kind::Gaussian;
    for (int i = 0; i < n_bumps; ++i) {
        GaussianBump b;
        b.amplitude = rng.uniform(0.5, 1.0);
        b.mean = rng.uniform(0.3, 0.7) * L_x;
        b.sigma = rng.uniform(0.05, 0.15) * L_x;
        s.bumps.push_back(b);
    }
    return s;
}

}  // namespace lemon::pdelab
