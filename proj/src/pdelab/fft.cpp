#include "fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <mutex>
#include <numbers>

namespace lemon::pdelab::detail {

namespace {

// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
    std::lock_guard<std::mutex> lock(planner_mutex());
    real_ = fftw_alloc_real(n);
    auto* spec = fftw_alloc_complex(n / 2 + 1);
    spec_ = spec;
    const int len = static_cast<int>(n);
    plan_fwd_ = fftw_plan_dft_r2c_1d(len, real_, spec, FFTW_ESTIMATE);
    plan_inv_ = fftw_plan_dft_c2r_1d(len, spec, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_fwd_));
    fftw_destroy_plan(static_cast<fftw_plan>(plan_inv_));
    fftw_free(real_);
    fftw_free(spec_);
}

void RealFft::forward(std::span<const double> in, std::vector<std::complex<double>>& out) {
    std::memcpy(real_, in.data(), n_ * sizeof(double));
    fftw_execute(static_cast<fftw_plan>(plan_fwd_));
    out.resize(bins());
    std::memcpy(static_cast<void*>(out.data()), spec_, bins() * sizeof(fftw_complex));
}

void RealFft::inverse(const std::vector<std::complex<double>>& in, std::span<double> out) {
    std::memcpy(spec_, static_cast<const void*>(in.data()), bins() * sizeof(fftw_complex));
    fftw_execute(static_cast<fftw_plan>(plan_inv_));
    const double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t j = 0; j < n_; ++j) out[j] = real_[j] * scale;
}

std::vector<double> wavenumbers(std::size_t n, double L) {
    std::vector<double> k(n / 2 + 1);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] = 2.0 * std::numbers::pi * static_cast<double>(i) / L;
    return k;
}

}  // namespace lemon::pdelab::detail
