#pragma once

#include <complex>
#include <span>
#include <vector>

namespace lemon::pdelab::detail {

/// Real <-> half-complex DFT of fixed length backed by FFTW.
/// forward: X_k = sum_j x_j e^{-2 pi i jk/n}, k = 0..n/2.
/// inverse: normalized, so inverse(forward(x)) == x.
class RealFft {
public:
    explicit RealFft(std::size_t n);
    ~RealFft();
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    std::size_t size() const noexcept { return n_; }
    std::size_t bins() const noexcept { return n_ / 2 + 1; }

    void forward(std::span<const double> in, std::vector<std::complex<double>>& out);
    void inverse(const std::vector<std::complex<double>>& in, std::span<double> out);

private:
    std::size_t n_;
    double* real_ = nullptr;
    void* spec_ = nullptr;
    void* plan_fwd_ = nullptr;
    void* plan_inv_ = nullptr;
};

/// Angular wavenumbers 2 pi k / L for the half spectrum of length n.
std::vector<double> wavenumbers(std::size_t n, double L);

}  // namespace lemon::pdelab::detail
