#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lemon::pdelab {

/// Space-time sampling shared by every IOFP of a dataset.
///
/// Input frames sit at t_i = i * t_split / (n_t_in - 1) on [0, t_split];
/// output frames at tau_j = t_split + (j + 1) * (T - t_split) / n_t_out, so
/// tau_0 > t_split and tau_{n_t_out-1} = T.
struct Grid {
    int n_x = 128;
    double L_x = 1.0;
    int n_t_in = 8;
    int n_t_out = 16;
    double T = 1.0;
    double split_fraction = 0.4;  // t_split = split_fraction * T

    /// Throws ConfigError unless n_x >= 16, frame counts >= 1, 0 < split < 1, T > 0.
    void validate() const;

    double dx() const { return L_x / n_x; }
    double t_split() const { return split_fraction * T; }
    int frames() const { return n_t_in + n_t_out; }

    /// x_j = j * dx, j = 0..n_x-1 (periodic domain [0, L_x)).
    std::vector<double> x() const;
    std::vector<double> input_times() const;
    std::vector<double> output_times() const;
    /// input_times() followed by output_times().
    std::vector<double> frame_times() const;

    friend bool operator==(const Grid&, const Grid&) = default;
};

/// Row-major [rows x cols] block of doubles (trajectory frames).
struct Frames {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Frames() = default;
    Frames(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

}  // namespace lemon::pdelab
