#include "lemon/pdelab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "fft.hpp"
#include "lemon/common/error.hpp"

namespace lemon::pdelab {

namespace {

using cplx = std::complex<double>;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Raised inside a march; solve_at retries with a smaller step.
struct StepFailure {
    std::string why;
};

struct Space {
    std::size_t n;
    double L;
    double dx;
    Boundary bc;

    std::size_t left(std::size_t j) const {
        if (j > 0) return j - 1;
        return bc == Boundary::Periodic ? n - 1 : 0;
    }
    std::size_t right(std::size_t j) const {
        if (j + 1 < n) return j + 1;
        return bc == Boundary::Periodic ? 0 : n - 1;
    }
};

double max_abs(std::span<const double> u) {
    double m = 0.0;
    for (double v : u) m = std::max(m, std::abs(v));
    return m;
}

void laplacian(const Space& s, std::span<const double> u, std::span<double> out) {
    const double inv = 1.0 / (s.dx * s.dx);
    for (std::size_t j = 0; j < s.n; ++j) out[j] = (u[s.right(j)] - 2.0 * u[j] + u[s.left(j)]) * inv;
}

/// Advances `state` through `times`, recording the first `n` entries at each.
/// `step(state, dt)` advances in place; `stable_dt(state)` bounds the step.
template <class Step, class StableDt>
Frames march(std::vector<double> state, std::size_t n, std::span<const double> times, double dt_cap,
             double blowup, Step step, StableDt stable_dt) {
    Frames out(times.size(), n);
    double t = 0.0;
    std::size_t steps = 0;
    constexpr std::size_t kMaxSteps = 50'000'000;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double target = times[i];
        while (t < target) {
            double dt = std::min(stable_dt(state), dt_cap);
            if (!(dt > 0.0) || !std::isfinite(dt)) throw StepFailure{"time step collapsed"};
            const bool last = dt >= target - t;
            if (last) dt = target - t;
            step(state, dt);
            t = last ? target : t + dt;
            if (++steps > kMaxSteps) throw StepFailure{"step budget exhausted"};
            for (double v : state) {
                if (!std::isfinite(v)) {
                    std::ostringstream os;
                    os << "non-finite state at t=" << t;
                    throw StepFailure{os.str()};
                }
            }
        }
        for (std::size_t j = 0; j < n; ++j) {
            const double v = state[j];
            if (!std::isfinite(v) || std::abs(v) > blowup) {
                std::ostringstream os;
                os << "state exceeded blow-up bound at t=" << target;
                throw StepFailure{os.str()};
            }
            out(i, j) = v;
        }
    }
    return out;
}

/// Classical RK4 on du/dt = rhs(u).
template <class Rhs>
void rk4_step(std::vector<double>& u, double dt, Rhs& rhs, std::vector<double> (&work)[5]) {
    const std::size_t m = u.size();
    for (auto& w : work) w.resize(m);
    auto& k1 = work[0];
    auto& k2 = work[1];
    auto& k3 = work[2];
    auto& k4 = work[3];
    auto& tmp = work[4];
    rhs(u, k1);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + 0.5 * dt * k1[i];
    rhs(tmp, k2);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + 0.5 * dt * k2[i];
    rhs(tmp, k3);
    for (std::size_t i = 0; i < m; ++i) tmp[i] = u[i] + dt * k3[i];
    rhs(tmp, k4);
    for (std::size_t i = 0; i < m; ++i) u[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

template <class Rhs, class StableDt>
Frames method_of_lines(std::vector<double> state, std::size_t n, std::span<const double> times, double dt_cap,
                       double blowup, Rhs rhs, StableDt stable_dt) {
    std::vector<double> work[5];
    return march(
        std::move(state), n, times, dt_cap, blowup, [&](std::vector<double>& u, double dt) { rk4_step(u, dt, rhs, work); },
        stable_dt);
}

// ---------------------------------------------------------------- exact

Frames exact_translation(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0, double L,
                         std::span<const double> times) {
    Frames out(times.size(), u0.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        std::vector<double> row;
        if (fam.solver == SolverKind::ExactAdvection) {
            row = spectral_shift(u0, L, q[0] * times[i]);
        } else {
            // d'Alembert with zero initial velocity.
            const double c = std::sqrt(q[0]);
            auto a = spectral_shift(u0, L, c * times[i]);
            auto b = spectral_shift(u0, L, -c * times[i]);
            row.resize(u0.size());
            for (std::size_t j = 0; j < row.size(); ++j) row[j] = 0.5 * (a[j] + b[j]);
        }
        std::copy(row.begin(), row.end(), out.row(i).begin());
    }
    return out;
}

// ---------------------------------------------------------------- spectral (KdV, CH)

/// Lawson (integrating-factor) RK4 for u_hat' = lin * u_hat + N(u_hat).
class SpectralStepper {
public:
    SpectralStepper(std::size_t n, double L) : fft_(n), k_(detail::wavenumbers(n, L)), n_(n) {
        // 2/3-rule dealiasing mask.
        mask_.assign(k_.size(), 1.0);
        const std::size_t cutoff = n / 3;
        for (std::size_t i = 0; i < k_.size(); ++i) {
            if (i > cutoff) mask_[i] = 0.0;
        }
        phys_.resize(n);
    }

    const std::vector<double>& k() const { return k_; }
    double k_max_dealiased() const { return k_[std::min(n_ / 3, k_.size() - 1)]; }
    detail::RealFft& fft() { return fft_; }

    /// out = mask * mult(k) * FFT(u^2), where u = IFFT(v).
    template <class Mult>
    void square_term(const std::vector<cplx>& v, std::vector<cplx>& out, Mult mult) {
        fft_.inverse(v, phys_);
        for (auto& x : phys_) x = x * x;
        fft_.forward(phys_, out);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask_[i] * mult(k_[i]);
    }

    template <class Nonlinear>
    void step(std::vector<cplx>& v, double dt, const std::vector<cplx>& lin, Nonlinear nonlinear) {
        const std::size_t m = v.size();
        e_.resize(m);
        e2_.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            e_[i] = std::exp(lin[i] * (0.5 * dt));
            e2_[i] = e_[i] * e_[i];
        }
        tmp_.resize(m);
        nonlinear(v, k1_);
        for (std::size_t i = 0; i < m; ++i) tmp_[i] = e_[i] * (v[i] + 0.5 * dt * k1_[i]);
        nonlinear(tmp_, k2_);
        for (std::size_t i = 0; i < m; ++i) tmp_[i] = e_[i] * v[i] + 0.5 * dt * k2_[i];
        nonlinear(tmp_, k3_);
        for (std::size_t i = 0; i < m; ++i) tmp_[i] = e2_[i] * v[i] + dt * e_[i] * k3_[i];
        nonlinear(tmp_, k4_);
        for (std::size_t i = 0; i < m; ++i) {
            v[i] = e2_[i] * v[i] + dt / 6.0 * (e2_[i] * k1_[i] + 2.0 * e_[i] * (k2_[i] + k3_[i]) + k4_[i]);
        }
    }

private:
    detail::RealFft fft_;
    std::vector<double> k_;
    std::size_t n_;
    std::vector<double> mask_;
    std::vector<double> phys_;
    std::vector<cplx> e_, e2_, tmp_, k1_, k2_, k3_, k4_;
};

/// Marches a pseudo-spectral equation; the state is kept in physical space
/// between steps so march() can check it.
template <class Setup>
Frames spectral_solve(std::span<const double> u0, double L, std::span<const double> times, double dt_cap,
                      double blowup, double safety, Setup setup) {
    const std::size_t n = u0.size();
    SpectralStepper stepper(n, L);
    std::vector<cplx> lin(stepper.k().size());
    auto [linear, nonlinear, rate] = setup(stepper);
    for (std::size_t i = 0; i < lin.size(); ++i) lin[i] = linear(stepper.k()[i]);
    std::vector<cplx> v;
    return march(
        std::vector<double>(u0.begin(), u0.end()), n, times, dt_cap, blowup,
        [&](std::vector<double>& u, double dt) {
            stepper.fft().forward(u, v);
            stepper.step(v, dt, lin, nonlinear);
            stepper.fft().inverse(v, u);
        },
        [&](const std::vector<double>& u) { return safety / std::max(rate(max_abs(u)), 1e-12); });
}

Frames solve_kdv(double q, std::span<const double> u0, double L, std::span<const double> times, double dt_cap,
                 double blowup, double safety) {
    // u_t = -q^2 u_xxx - (u^2/2)_x  ->  lin = i q^2 k^3, N = -(i k / 2) FFT(u^2)
    return spectral_solve(u0, L, times, dt_cap, blowup, safety, [q](SpectralStepper& st) {
        auto linear = [q](double k) { return cplx(0.0, q * q * k * k * k); };
        auto nonlinear = [&st](const std::vector<cplx>& v, std::vector<cplx>& out) {
            st.square_term(v, out, [](double k) { return cplx(0.0, -0.5 * k); });
        };
        const double kmax = st.k_max_dealiased();
        auto rate = [kmax](double umax) { return kmax * umax; };
        return std::make_tuple(linear, nonlinear, rate);
    });
}

Frames solve_cahn_hilliard(double q, std::span<const double> u0, double L, std::span<const double> times,
                           double dt_cap, double blowup, double safety) {
    // u_t = -q^2 u_xxxx - 3 (u^2)_xx  ->  lin = -q^2 k^4, N = 3 k^2 FFT(u^2)
    return spectral_solve(u0, L, times, dt_cap, blowup, safety, [q](SpectralStepper& st) {
        auto linear = [q](double k) { return cplx(-q * q * k * k * k * k, 0.0); };
        auto nonlinear = [&st](const std::vector<cplx>& v, std::vector<cplx>& out) {
            st.square_term(v, out, [](double k) { return cplx(3.0 * k * k, 0.0); });
        };
        const double kmax = st.k_max_dealiased();
        auto rate = [kmax](double umax) { return 6.0 * kmax * kmax * umax; };
        return std::make_tuple(linear, nonlinear, rate);
    });
}

// ---------------------------------------------------------------- conservation laws

class ConservationLaw {
public:
    ConservationLaw(const Space& s, Flux flux, double q) : s_(s), flux_(flux), q_(q) {
        ext_.resize(s.n + 4);
        slope_.resize(s.n + 2);
        face_.resize(s.n + 1);
    }

    double stable_dt(std::span<const double> u) const {
        double speed = 0.0;
        for (double v : u) speed = std::max(speed, std::abs(q_ * flux_.df(v)));
        return speed > 0.0 ? 0.4 * s_.dx / speed : kInf;
    }

    /// du = -(F_{j+1/2} - F_{j-1/2}) / dx with MUSCL (MC limiter) states and
    /// the exact Godunov flux.
    void rhs(std::span<const double> u, std::span<double> du) {
        const std::size_t n = s_.n;
        for (std::size_t j = 0; j < n; ++j) ext_[j + 2] = u[j];
        if (s_.bc == Boundary::Periodic) {
            ext_[0] = u[n - 2];
            ext_[1] = u[n - 1];
            ext_[n + 2] = u[0];
            ext_[n + 3] = u[1];
        } else {
            ext_[0] = u[1];
            ext_[1] = u[0];
            ext_[n + 2] = u[n - 1];
            ext_[n + 3] = u[n - 2];
        }
        // slope_[i] belongs to ext_[i + 1], i = 0..n+1 (cells -1..n)
        for (std::size_t i = 0; i < n + 2; ++i) {
            const double a = ext_[i + 1] - ext_[i];
            const double b = ext_[i + 2] - ext_[i + 1];
            slope_[i] = mc_limiter(a, b);
        }
        // face_[j] is the interface between cells j-1 and j, j = 0..n
        for (std::size_t j = 0; j <= n; ++j) {
            const double ul = ext_[j + 1] + 0.5 * slope_[j];
            const double ur = ext_[j + 2] - 0.5 * slope_[j + 1];
            face_[j] = flux_.godunov(q_, ul, ur);
        }
        const double inv = 1.0 / s_.dx;
        for (std::size_t j = 0; j < n; ++j) du[j] = -(face_[j + 1] - face_[j]) * inv;
    }

private:
    static double mc_limiter(double a, double b) {
        if (a * b <= 0.0) return 0.0;
        const double s = a > 0.0 ? 1.0 : -1.0;
        return s * std::min({2.0 * std::abs(a), 2.0 * std::abs(b), 0.5 * std::abs(a + b)});
    }

    Space s_;
    Flux flux_;
    double q_;
    std::vector<double> ext_, slope_, face_;
};

/// Crank-Nicolson step of u_t = nu u_xx. Periodic systems are cyclic
/// tridiagonal (Sherman-Morrison); Neumann rows mirror the boundary cell.
class ImplicitDiffusion {
public:
    explicit ImplicitDiffusion(const Space& s) : s_(s), rhs_(s.n), c_(s.n), d_(s.n), z_(s.n), lap_(s.n) {}

    void step(std::vector<double>& u, double nu, double dt) {
        const std::size_t n = s_.n;
        const double r = nu * dt / (s_.dx * s_.dx);
        laplacian(s_, u, lap_);
        for (std::size_t j = 0; j < n; ++j) rhs_[j] = u[j] + 0.5 * r * s_.dx * s_.dx * lap_[j];
        const double off = -0.5 * r;
        if (s_.bc == Boundary::Periodic) {
            // A = T + w v^T with corners folded into the rank-one term.
            const double gamma = -(1.0 + r);
            std::vector<double> diag(n, 1.0 + r);
            diag[0] -= gamma;
            diag[n - 1] -= off * off / gamma;
            thomas(diag, off, rhs_, u);
            std::fill(z_.begin(), z_.end(), 0.0);
            z_[0] = gamma;
            z_[n - 1] = off;
            std::vector<double> y(n);
            thomas(diag, off, z_, y);
            const double fac = (u[0] + off * u[n - 1] / gamma) / (1.0 + y[0] + off * y[n - 1] / gamma);
            for (std::size_t j = 0; j < n; ++j) u[j] -= fac * y[j];
        } else {
            std::vector<double> diag(n, 1.0 + r);
            diag[0] = 1.0 + 0.5 * r;
            diag[n - 1] = 1.0 + 0.5 * r;
            thomas(diag, off, rhs_, u);
        }
    }

private:
    /// Constant off-diagonal tridiagonal solve.
    void thomas(const std::vector<double>& diag, double off, const std::vector<double>& b, std::vector<double>& x) {
        const std::size_t n = diag.size();
        c_[0] = off / diag[0];
        d_[0] = b[0] / diag[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double m = diag[i] - off * c_[i - 1];
            c_[i] = off / m;
            d_[i] = (b[i] - off * d_[i - 1]) / m;
        }
        x[n - 1] = d_[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) x[i] = d_[i] - c_[i] * x[i + 1];
    }

    Space s_;
    std::vector<double> rhs_, c_, d_, z_, lap_;
};

Frames solve_conservation(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0,
                          const Space& s, std::span<const double> times, double dt_cap, double blowup,
                          double safety) {
    const double nu = fam.viscous ? q[1] / std::numbers::pi : 0.0;
    ConservationLaw law(s, Flux{fam.flux}, q[0]);
    ImplicitDiffusion viscous(s);
    std::vector<double> k(s.n), u1(s.n), u2(s.n);
    // Strang splitting around a Shu-Osher SSP-RK3 transport step.
    auto step = [&](std::vector<double>& u, double dt) {
        if (nu > 0.0) viscous.step(u, nu, 0.5 * dt);
        law.rhs(u, k);
        for (std::size_t j = 0; j < s.n; ++j) u1[j] = u[j] + dt * k[j];
        law.rhs(u1, k);
        for (std::size_t j = 0; j < s.n; ++j) u2[j] = 0.75 * u[j] + 0.25 * (u1[j] + dt * k[j]);
        law.rhs(u2, k);
        for (std::size_t j = 0; j < s.n; ++j) u[j] = u[j] / 3.0 + 2.0 / 3.0 * (u2[j] + dt * k[j]);
        if (nu > 0.0) viscous.step(u, nu, 0.5 * dt);
    };
    return march(std::vector<double>(u0.begin(), u0.end()), s.n, times, dt_cap, blowup, step,
                 [&](const std::vector<double>& u) { return safety * law.stable_dt(u); });
}

// ---------------------------------------------------------------- diffusion-reaction

double react(ReactionKind kind, double p, double u, double dt) {
    switch (kind) {
        case ReactionKind::Linear:
            return u * std::exp(p * dt);
        case ReactionKind::Logistic: {
            const double e = std::exp(p * dt);
            return u * e / (1.0 - u + u * e);
        }
        case ReactionKind::SquareLogistic:
        case ReactionKind::Bistable: {
            auto f = [kind, p](double v) {
                return kind == ReactionKind::SquareLogistic ? p * v * v * (1.0 - v) * (1.0 - v)
                                                            : p * v * v * (1.0 - v);
            };
            const double k1 = f(u);
            const double k2 = f(u + 0.5 * dt * k1);
            const double k3 = f(u + 0.5 * dt * k2);
            const double k4 = f(u + dt * k3);
            return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        case ReactionKind::None:
            break;
    }
    return u;
}

Frames solve_diffusion_reaction(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0,
                                const Space& s, std::span<const double> times, double dt_cap, double blowup,
                                double safety) {
    const double diff = q[0];
    const double p = q[1];
    std::vector<double> lap(s.n), mid(s.n);
    // Strang splitting: half reaction, Heun diffusion step, half reaction.
    auto step = [&](std::vector<double>& u, double dt) {
        for (auto& v : u) v = react(fam.reaction, p, v, 0.5 * dt);
        laplacian(s, u, lap);
        for (std::size_t j = 0; j < s.n; ++j) mid[j] = u[j] + dt * diff * lap[j];
        laplacian(s, mid, lap);
        for (std::size_t j = 0; j < s.n; ++j) u[j] = 0.5 * (u[j] + mid[j] + dt * diff * lap[j]);
        for (auto& v : u) v = react(fam.reaction, p, v, 0.5 * dt);
    };
    const double dt_diff = 0.4 * s.dx * s.dx / diff;
    const double dt_react = 0.1 / std::max(p, 1e-12);
    return march(std::vector<double>(u0.begin(), u0.end()), s.n, times, dt_cap, blowup, step,
                 [&](const std::vector<double>&) { return safety * std::min(dt_diff, dt_react); });
}

// ---------------------------------------------------------------- dispatcher

Frames solve_once(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0, const Space& s,
                  std::span<const double> times, double dt_cap, double blowup, double safety) {
    const std::size_t n = s.n;
    switch (fam.solver) {
        case SolverKind::ExactAdvection:
        case SolverKind::ExactWave:
            return exact_translation(fam, q, u0, s.L, times);

        case SolverKind::Heat: {
            const double k = q[0];
            auto rhs = [&](const std::vector<double>& u, std::vector<double>& du) {
                laplacian(s, u, du);
                for (auto& v : du) v *= k;
            };
            const double dt = safety * 0.5 * s.dx * s.dx / k;
            return method_of_lines(std::vector<double>(u0.begin(), u0.end()), n, times, dt_cap, blowup, rhs,
                                   [dt](const std::vector<double>&) { return dt; });
        }

        case SolverKind::KleinGordon:
        case SolverKind::SineGordon: {
            // State [u, v] with u_t = v; zero initial velocity.
            std::vector<double> state(2 * n, 0.0);
            std::copy(u0.begin(), u0.end(), state.begin());
            std::vector<double> lap(n);
            const bool kg = fam.solver == SolverKind::KleinGordon;
            const double qq = q[0];
            const double c2 = kg ? qq * qq : 1.0;
            const double mass = kg ? q[1] * q[1] * qq * qq * qq * qq : 0.0;
            auto rhs = [&](const std::vector<double>& st, std::vector<double>& dst) {
                std::span<const double> u(st.data(), n);
                laplacian(s, u, lap);
                for (std::size_t j = 0; j < n; ++j) {
                    dst[j] = st[n + j];
                    dst[n + j] = c2 * lap[j] - (kg ? mass * u[j] : qq * std::sin(u[j]));
                }
            };
            const double omega = std::sqrt(4.0 * c2 / (s.dx * s.dx) + mass + (kg ? 0.0 : qq));
            const double dt = safety * 1.4 / omega;
            return method_of_lines(std::move(state), n, times, dt_cap, blowup, rhs,
                                   [dt](const std::vector<double>&) { return dt; });
        }

        case SolverKind::PorousMedium: {
            const int m = static_cast<int>(std::lround(q[0]));
            std::vector<double> w(n);
            auto rhs = [&](const std::vector<double>& u, std::vector<double>& du) {
                for (std::size_t j = 0; j < n; ++j) {
                    double p = 1.0;
                    for (int e = 0; e < m; ++e) p *= u[j];
                    w[j] = p;
                }
                laplacian(s, w, du);
            };
            auto stable = [&](const std::vector<double>& u) {
                const double umax = std::max(max_abs(u), 1e-12);
                return safety * 0.6 * s.dx * s.dx / (4.0 * m * std::pow(umax, m - 1));
            };
            return method_of_lines(std::vector<double>(u0.begin(), u0.end()), n, times, dt_cap, blowup, rhs, stable);
        }

        case SolverKind::KdV:
            if (s.bc != Boundary::Periodic) throw SolverError("KdV solver requires periodic boundaries");
            return solve_kdv(q[0], u0, s.L, times, dt_cap, blowup, safety * 1.5);

        case SolverKind::CahnHilliard:
            if (s.bc != Boundary::Periodic) throw SolverError("Cahn-Hilliard solver requires periodic boundaries");
            return solve_cahn_hilliard(q[0], u0, s.L, times, dt_cap, blowup, safety * 1.5);

        case SolverKind::DiffusionReaction:
            return solve_diffusion_reaction(fam, q, u0, s, times, dt_cap, blowup, safety);

        case SolverKind::ConservationLaw:
            return solve_conservation(fam, q, u0, s, times, dt_cap, blowup, safety);

        case SolverKind::FokkerPlanck: {
            const auto sc = fokker_planck_scales(q[0]);
            std::vector<double> drift_face(n);
            for (std::size_t j = 0; j < n; ++j) drift_face[j] = sc.drift * std::sin((static_cast<double>(j) + 0.5) * s.dx);
            std::vector<double> flux(n);
            auto rhs = [&](const std::vector<double>& u, std::vector<double>& du) {
                // flux[j] = J_{j+1/2} = -rate (u_x + drift sin(x) u)
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t r = s.right(j);
                    if (s.bc == Boundary::Neumann && j + 1 == n) {
                        flux[j] = 0.0;
                        continue;
                    }
                    flux[j] = -sc.rate * ((u[r] - u[j]) / s.dx + drift_face[j] * 0.5 * (u[j] + u[r]));
                }
                for (std::size_t j = 0; j < n; ++j) {
                    const double fl = j == 0 ? (s.bc == Boundary::Periodic ? flux[n - 1] : 0.0) : flux[j - 1];
                    du[j] = -(flux[j] - fl) / s.dx;
                }
            };
            const double dt = safety * 0.25 * s.dx * s.dx / sc.rate;
            return method_of_lines(std::vector<double>(u0.begin(), u0.end()), n, times, dt_cap, blowup, rhs,
                                   [dt](const std::vector<double>&) { return dt; });
        }
    }
    throw SolverError("no solver bound for family " + fam.id);
}

}  // namespace

std::vector<double> spectral_shift(std::span<const double> u0, double L_x, double shift) {
    const std::size_t n = u0.size();
    detail::RealFft fft(n);
    std::vector<cplx> spec;
    fft.forward(u0, spec);
    const auto k = detail::wavenumbers(n, L_x);
    for (std::size_t i = 0; i < spec.size(); ++i) {
        const double phase = -k[i] * shift;
        if (n % 2 == 0 && i == n / 2) {
            // The Nyquist mode only carries its cosine part on the grid.
            spec[i] *= std::cos(phase);
        } else {
            spec[i] *= cplx(std::cos(phase), std::sin(phase));
        }
    }
    std::vector<double> out(n);
    fft.inverse(spec, out);
    return out;
}

Frames solve_at(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0, double L_x,
                std::span<const double> times, Boundary boundary, const SolveOptions& opts) {
    fam.check_params(q);
    if (u0.size() < 4) throw DomainError("solve: need at least 4 grid points");
    for (double v : u0) {
        if (!std::isfinite(v)) throw DomainError("solve: initial condition is not finite");
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < 0.0 || (i > 0 && times[i] < times[i - 1])) {
            throw DomainError("solve: output times must be non-negative and ascending");
        }
    }
    if (boundary == Boundary::Neumann &&
        (fam.solver == SolverKind::ExactAdvection || fam.solver == SolverKind::ExactWave)) {
        throw DomainError("solve: exact translation solutions are periodic only");
    }
    const Space s{u0.size(), L_x, L_x / static_cast<double>(u0.size()), boundary};
    std::string last_error;
    double safety = 1.0;
    double cap = opts.dt_max > 0.0 ? opts.dt_max : kInf;
    for (int attempt = 0; attempt <= opts.max_refinements; ++attempt) {
        try {
            return solve_once(fam, q, u0, s, times, cap, opts.blowup, safety);
        } catch (const StepFailure& f) {
            last_error = f.why;
            safety *= 0.5;
            if (std::isfinite(cap)) cap *= 0.5;
        }
    }
    throw SolverError(fam.id + ": " + last_error + " after " + std::to_string(opts.max_refinements) +
                      " step refinements");
}

Frames solve(const PDEFamily& fam, std::span<const double> q, std::span<const double> u0, const Grid& grid,
             const SolveOptions& opts) {
    grid.validate();
    if (u0.size() != static_cast<std::size_t>(grid.n_x)) throw DomainError("solve: u0 length differs from grid n_x");
    const auto times = grid.frame_times();
    return solve_at(fam, q, u0, grid.L_x, times, fam.boundary, opts);
}

}  // namespace lemon::pdelab
