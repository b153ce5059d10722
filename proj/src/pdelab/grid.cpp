#include "lemon/pdelab/grid.hpp"

#include <cmath>
#include <string>

#include "lemon/common/error.hpp"

namespace lemon::pdelab {

void Grid::validate() const {
    if (n_x < 16) throw ConfigError("grid: n_x must be >= 16, got " + std::to_string(n_x));
    if (n_t_in < 1 || n_t_out < 1) throw ConfigError("grid: frame counts must be >= 1");
    if (!(L_x > 0.0) || !std::isfinite(L_x)) throw ConfigError("grid: L_x must be positive");
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("grid: T must be positive");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("grid: split fraction must be in (0, 1)");
}

std::vector<double> Grid::x() const {
    std::vector<double> xs(static_cast<std::size_t>(n_x));
    const double h = dx();
    for (int j = 0; j < n_x; ++j) xs[static_cast<std::size_t>(j)] = j * h;
    return xs;
}

std::vector<double> Grid::input_times() const {
    std::vector<double> ts(static_cast<std::size_t>(n_t_in), 0.0);
    if (n_t_in > 1) {
        for (int i = 0; i < n_t_in; ++i) ts[static_cast<std::size_t>(i)] = t_split() * i / (n_t_in - 1);
    }
    return ts;
}

std::vector<double> Grid::output_times() const {
    std::vector<double> ts(static_cast<std::size_t>(n_t_out));
    const double ts0 = t_split();
    for (int j = 0; j < n_t_out; ++j) ts[static_cast<std::size_t>(j)] = ts0 + (T - ts0) * (j + 1) / n_t_out;
    return ts;
}

std::vector<double> Grid::frame_times() const {
    auto ts = input_times();
    auto out = output_times();
    ts.insert(ts.end(), out.begin(), out.end());
    return ts;
}

}  // namespace lemon::pdelab
