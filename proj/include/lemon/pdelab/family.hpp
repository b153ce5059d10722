#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lemon/common/rng.hpp"
#include "lemon/exprtree/expr.hpp"
#include "lemon/exprtree/vocabulary.hpp"
#include "lemon/pdelab/grid.hpp"
#include "lemon/pdelab/ic.hpp"

namespace lemon::pdelab {

enum class SolverKind {
    ExactAdvection,
    ExactWave,
    Heat,
    KleinGordon,
    SineGordon,
    PorousMedium,
    CahnHilliard,
    KdV,
    DiffusionReaction,
    ConservationLaw,
    FokkerPlanck,
};

enum class Boundary { Periodic, Neumann };

enum class FluxKind { None, Burgers, Cubic, Sine, Cosine };
enum class ReactionKind { None, Linear, Logistic, SquareLogistic, Bistable };

/// Scalar flux f(u) of a conservation law (before the q multiplier).
struct Flux {
    FluxKind kind = FluxKind::None;

    double f(double u) const;
    double df(double u) const;
    /// Points in [a, b] where f' vanishes (candidates for Godunov extrema).
    std::vector<double> critical_points(double a, double b) const;
    /// Exact Godunov flux for q * f between states ul and ur (q > 0).
    double godunov(double q, double ul, double ur) const;
};

struct ParamSpec {
    std::string name;
    double canonical = 0.0;
    /// Non-empty for discrete parameters (porous-medium order m).
    std::vector<double> choices;
};

/// Parameter distribution D_q. Scalars are uniform on
/// [(1 - rel_width) q_c, (1 + rel_width) q_c]; rel_width = 0 is the point
/// mass at q_c (discrete parameters then take their canonical value).
struct ParamDistribution {
    double rel_width = 0.5;
};

/// One PDE family G(u; q) = 0: template, parameters, IC policy, solver binding.
struct PDEFamily {
    std::string id;
    std::string description;
    std::vector<ParamSpec> params;
    SolverKind solver = SolverKind::Heat;
    FluxKind flux = FluxKind::None;
    ReactionKind reaction = ReactionKind::None;
    bool viscous = false;
    ICSpec::Kind ic = ICSpec::Kind::Sinusoid;
    bool ic_post_ops = true;
    Normalization normalization{};
    double horizon_scale = 1.0;   // family T = horizon_scale * base T
    double domain_length = 0.0;   // 0 keeps the base grid's L_x
    Boundary boundary = Boundary::Periodic;

    std::vector<double> canonical() const;
    std::vector<double> sample_params(Rng& rng, const ParamDistribution& dist = {}) const;
    /// Base grid with this family's domain length and horizon applied.
    Grid resolve(const Grid& base) const;
    bool has_flux() const { return flux != FluxKind::None; }
    /// Throws DomainError if q has the wrong length or a non-positive entry.
    void check_params(std::span<const double> q) const;
};

/// All 21 families, in a fixed order.
const std::vector<PDEFamily>& registry();
/// Lookup by id; ConfigError for unknown ids.
const PDEFamily& family(std::string_view id);
std::vector<std::string> family_ids();

/// Expression tree of the residual G(u; q) with q substituted. Products of
/// derivatives are expanded by the chain rule so every derivative is an
/// atomic symbol (e.g. (u^2/2)_x becomes u*u_x). DomainError on wrong
/// parameter count.
expr::ExprNode family_to_tree(const PDEFamily& fam, std::span<const double> q);

/// Vocabulary over operator tokens, every leaf used by the registry and the
/// constant tokens.
expr::Vocabulary registry_vocabulary();

/// Dimensionless Fokker-Planck coefficients. The solver works in x~ = 1e7 x
/// on one period [0, 2 pi) of the potential and in reference time units of
/// 1 / (D(q_c) k^2), where k = 1e7 m^-1:
///     u_t = rate * (u_xx + drift * (sin(x) u)_x),
/// rate = q_c / q, drift = U_0 / (300 k_B).
struct FokkerPlanckScales {
    double rate;
    double drift;
    double reference_time_seconds;
};
FokkerPlanckScales fokker_planck_scales(double q);

}  // namespace lemon::pdelab
