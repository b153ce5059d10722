#include "lemon/pdelab/family.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "lemon/common/error.hpp"

namespace lemon::pdelab {

using expr::ExprNode;

double Flux::f(double u) const {
    switch (kind) {
        case FluxKind::Burgers:
            return 0.5 * u * u;
        case FluxKind::Cubic:
            return u * u * u / 3.0;
        case FluxKind::Sine:
            return std::sin(u);
        case FluxKind::Cosine:
            return std::cos(u);
        case FluxKind::None:
            break;
    }
    return 0.0;
}

double Flux::df(double u) const {
    switch (kind) {
        case FluxKind::Burgers:
            return u;
        case FluxKind::Cubic:
            return u * u;
        case FluxKind::Sine:
            return std::cos(u);
        case FluxKind::Cosine:
            return -std::sin(u);
        case FluxKind::None:
            break;
    }
    return 0.0;
}

namespace {

/// Calls fn(p) for each p in (a, b) where f' vanishes.
template <class Fn>
void for_each_critical(FluxKind kind, double a, double b, Fn fn) {
    switch (kind) {
        case FluxKind::Burgers:
        case FluxKind::Cubic:
            if (a < 0.0 && 0.0 < b) fn(0.0);
            break;
        case FluxKind::Sine:
        case FluxKind::Cosine: {
            // sin' = 0 at pi/2 + k pi, cos' = 0 at k pi.
            const double offset = kind == FluxKind::Sine ? 0.5 * std::numbers::pi : 0.0;
            for (double k = std::ceil((a - offset) / std::numbers::pi);; k += 1.0) {
                const double p = offset + k * std::numbers::pi;
                if (p >= b) break;
                if (p > a) fn(p);
            }
            break;
        }
        case FluxKind::None:
            break;
    }
}

}  // namespace

std::vector<double> Flux::critical_points(double a, double b) const {
    std::vector<double> pts;
    for_each_critical(kind, a, b, [&](double p) { pts.push_back(p); });
    return pts;
}

double Flux::godunov(double q, double ul, double ur) const {
    // min of f over [ul, ur] when ul <= ur, max over [ur, ul] otherwise.
    const bool take_min = ul <= ur;
    double best = take_min ? std::min(f(ul), f(ur)) : std::max(f(ul), f(ur));
    for_each_critical(kind, std::min(ul, ur), std::max(ul, ur), [&](double p) {
        const double fp = f(p);
        best = take_min ? std::min(best, fp) : std::max(best, fp);
    });
    return q * best;
}

std::vector<double> PDEFamily::canonical() const {
    std::vector<double> q;
    for (const auto& p : params) q.push_back(p.canonical);
    return q;
}

std::vector<double> PDEFamily::sample_params(Rng& rng, const ParamDistribution& dist) const {
    std::vector<double> q;
    for (const auto& p : params) {
        if (!p.choices.empty()) {
            if (dist.rel_width == 0.0) {
                q.push_back(p.canonical);
            } else {
                const auto k = rng.uniform_int(0, static_cast<std::int64_t>(p.choices.size()) - 1);
                q.push_back(p.choices[static_cast<std::size_t>(k)]);
            }
        } else {
            q.push_back(p.canonical * rng.uniform(1.0 - dist.rel_width, 1.0 + dist.rel_width));
        }
    }
    return q;
}

Grid PDEFamily::resolve(const Grid& base) const {
    Grid g = base;
    if (domain_length > 0.0) g.L_x = domain_length;
    g.T = base.T * horizon_scale;
    return g;
}

void PDEFamily::check_params(std::span<const double> q) const {
    if (q.size() != params.size()) {
        throw DomainError(id + ": expected " + std::to_string(params.size()) + " parameters, got " +
                          std::to_string(q.size()));
    }
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (!std::isfinite(q[i]) || !(q[i] > 0.0)) {
            throw DomainError(id + ": parameter " + params[i].name + " must be positive and finite");
        }
        if (!params[i].choices.empty() &&
            std::find(params[i].choices.begin(), params[i].choices.end(), q[i]) == params[i].choices.end()) {
            throw DomainError(id + ": parameter " + params[i].name + " must be one of its discrete choices");
        }
    }
}

namespace {

PDEFamily make(std::string id, std::string description, std::vector<ParamSpec> params, SolverKind solver) {
    PDEFamily f;
    f.id = std::move(id);
    f.description = std::move(description);
    f.params = std::move(params);
    f.solver = solver;
    return f;
}

PDEFamily conservation(std::string id, std::string description, FluxKind flux, bool viscous) {
    std::vector<ParamSpec> ps = {{"q", 1.0, {}}};
    if (viscous) ps.push_back({"p", 0.01, {}});
    auto f = make(std::move(id), std::move(description), std::move(ps), SolverKind::ConservationLaw);
    f.flux = flux;
    f.viscous = viscous;
    return f;
}

PDEFamily reaction(std::string id, std::string description, ReactionKind kind, double p_c, bool bounded) {
    auto f = make(std::move(id), std::move(description), {{"q", 3e-3, {}}, {"p", p_c, {}}},
                  SolverKind::DiffusionReaction);
    f.reaction = kind;
    if (bounded) f.normalization = {Normalization::Mode::Range, 1.0, 0.01};
    return f;
}

std::vector<PDEFamily> build_registry() {
    std::vector<PDEFamily> r;

    auto ad = make("AD", "advection u_t + q u_x = 0", {{"q", 0.5, {}}}, SolverKind::ExactAdvection);
    ad.ic_post_ops = false;
    r.push_back(ad);

    auto pm = make("PM", "porous medium u_t = (u^m)_xx", {{"m", 2.0, {2.0, 3.0, 4.0}}}, SolverKind::PorousMedium);
    pm.ic = ICSpec::Kind::Gaussian;
    pm.normalization = {Normalization::Mode::Range, 1.0, 0.01};
    r.push_back(pm);

    r.push_back(make("KdV", "Korteweg-de Vries u_t + q^2 u_xxx + u u_x = 0", {{"q", 0.022, {}}}, SolverKind::KdV));
    r.push_back(make("DF", "diffusion u_t = q u_xx", {{"q", 3e-3, {}}}, SolverKind::Heat));

    auto wv = make("WV", "wave u_tt = q u_xx", {{"q", 0.5, {}}}, SolverKind::ExactWave);
    wv.ic_post_ops = false;
    r.push_back(wv);

    r.push_back(make("SG", "sine-Gordon u_tt + q sin(u) = u_xx", {{"q", 1.0, {}}}, SolverKind::SineGordon));
    r.push_back(make("KG", "Klein-Gordon u_tt + p^2 q^4 u = q^2 u_xx", {{"q", 1.0, {}}, {"p", 0.1, {}}},
                     SolverKind::KleinGordon));

    auto ch = make("CH", "Cahn-Hilliard u_t + q^2 u_xxxx + 6 (u u_x)_x = 0", {{"q", 0.01, {}}},
                   SolverKind::CahnHilliard);
    ch.horizon_scale = 0.05;
    ch.normalization = {Normalization::Mode::Range, 0.01, 0.01};
    r.push_back(ch);

    r.push_back(reaction("DL", "diffusion with linear reaction u_t = q u_xx + p u", ReactionKind::Linear, 0.1, false));
    r.push_back(reaction("DLo", "diffusion with logistic reaction u_t = q u_xx + p u (1 - u)",
                         ReactionKind::Logistic, 1.0, true));
    r.push_back(reaction("DS", "diffusion with square logistic reaction u_t = q u_xx + p u^2 (1 - u)^2",
                         ReactionKind::SquareLogistic, 1.0, true));
    r.push_back(reaction("DBi", "diffusion with bistable reaction u_t = q u_xx + p u^2 (1 - u)",
                         ReactionKind::Bistable, 1.0, true));

    r.push_back(conservation("SinF", "sine flux u_t + q (sin u)_x = p/pi u_xx", FluxKind::Sine, true));
    r.push_back(conservation("InSin", "inviscid sine flux u_t + q (sin u)_x = 0", FluxKind::Sine, false));
    r.push_back(conservation("Cos", "cosine flux u_t + q (cos u)_x = p/pi u_xx", FluxKind::Cosine, true));
    r.push_back(conservation("InCos", "inviscid cosine flux u_t + q (cos u)_x = 0", FluxKind::Cosine, false));
    r.push_back(conservation("CC", "cubic flux u_t + q (u^3/3)_x = p/pi u_xx", FluxKind::Cubic, true));
    r.push_back(conservation("InCub", "inviscid cubic flux u_t + q (u^3/3)_x = 0", FluxKind::Cubic, false));
    r.push_back(conservation("B", "Burgers u_t + q (u^2/2)_x = p/pi u_xx", FluxKind::Burgers, true));
    r.push_back(conservation("InB", "inviscid Burgers u_t + q (u^2/2)_x = 0", FluxKind::Burgers, false));

    auto fp = make("FP", "Fokker-Planck u_t = D u_xx - (U_x u)_x / gamma", {{"q", 1e-3, {}}},
                   SolverKind::FokkerPlanck);
    fp.ic = ICSpec::Kind::Gaussian;
    fp.normalization = {Normalization::Mode::Probability, 1.0, 0.0};
    fp.domain_length = 2.0 * std::numbers::pi;
    r.push_back(fp);

    return r;
}

}  // namespace

const std::vector<PDEFamily>& registry() {
    static const std::vector<PDEFamily> r = build_registry();
    return r;
}

const PDEFamily& family(std::string_view id) {
    for (const auto& f : registry()) {
        if (f.id == id) return f;
    }
    throw ConfigError("unknown PDE family '" + std::string(id) + "'");
}

std::vector<std::string> family_ids() {
    std::vector<std::string> ids;
    for (const auto& f : registry()) ids.push_back(f.id);
    return ids;
}

FokkerPlanckScales fokker_planck_scales(double q) {
    constexpr double k_b = 1.380649e-23;
    constexpr double temperature = 300.0;
    constexpr double u0 = 5e-21;
    constexpr double wave = 1e7;
    constexpr double q_c = 1e-3;
    const double gamma_c = 6.0 * std::numbers::pi * 1e-7 * q_c;
    const double diffusion_c = temperature * k_b / gamma_c;
    return {q_c / q, u0 / (temperature * k_b), 1.0 / (diffusion_c * wave * wave)};
}

ExprNode family_to_tree(const PDEFamily& fam, std::span<const double> q) {
    using namespace expr;
    fam.check_params(q);
    const double pi = std::numbers::pi;
    auto u = [] { return var("u"); };
    auto ut = [] { return d("u_t"); };
    auto ux = [] { return d("u_x"); };
    auto uxx = [] { return d("u_xx"); };

    // Flux derivative f'(u) u_x for the conservation laws, expanded.
    auto flux_term = [&](double qq) -> ExprNode {
        switch (fam.flux) {
            case FluxKind::Burgers:
                return c(qq) * (u() * ux());
            case FluxKind::Cubic:
                return c(qq) * (pow(u(), c(2.0)) * ux());
            case FluxKind::Sine:
                return c(qq) * (cos(u()) * ux());
            case FluxKind::Cosine:
                return c(qq) * (neg(sin(u())) * ux());
            case FluxKind::None:
                break;
        }
        throw DomainError("family has no flux");
    };

    switch (fam.solver) {
        case SolverKind::ExactAdvection:
            return ut() + c(q[0]) * ux();
        case SolverKind::PorousMedium: {
            // (u^m)_xx = m (m-1) u^(m-2) u_x^2 + m u^(m-1) u_xx
            const double m = q[0];
            return ut() - (c(m * (m - 1.0)) * (pow(u(), c(m - 2.0)) * pow(ux(), c(2.0))) +
                           c(m) * (pow(u(), c(m - 1.0)) * uxx()));
        }
        case SolverKind::KdV:
            return ut() + c(q[0] * q[0]) * d("u_xxx") + u() * ux();
        case SolverKind::Heat:
            return ut() - c(q[0]) * uxx();
        case SolverKind::ExactWave:
            return d("u_tt") - c(q[0]) * uxx();
        case SolverKind::SineGordon:
            return d("u_tt") + c(q[0]) * sin(u()) - uxx();
        case SolverKind::KleinGordon: {
            const double qq = q[0];
            const double p = q[1];
            return d("u_tt") + c(p * p * qq * qq * qq * qq) * u() - c(qq * qq) * uxx();
        }
        case SolverKind::CahnHilliard:
            // 6 (u u_x)_x = 6 (u_x^2 + u u_xx)
            return ut() + c(q[0] * q[0]) * d("u_xxxx") + c(6.0) * (pow(ux(), c(2.0)) + u() * uxx());
        case SolverKind::DiffusionReaction: {
            const double p = q[1];
            ExprNode react = u();
            switch (fam.reaction) {
                case ReactionKind::Linear:
                    react = u();
                    break;
                case ReactionKind::Logistic:
                    react = u() * (c(1.0) - u());
                    break;
                case ReactionKind::SquareLogistic:
                    react = pow(u(), c(2.0)) * pow(c(1.0) - u(), c(2.0));
                    break;
                case ReactionKind::Bistable:
                    react = pow(u(), c(2.0)) * (c(1.0) - u());
                    break;
                case ReactionKind::None:
                    throw DomainError("diffusion-reaction family without a reaction");
            }
            return ut() - c(q[0]) * uxx() - c(p) * react;
        }
        case SolverKind::ConservationLaw: {
            ExprNode lhs = ut() + flux_term(q[0]);
            if (fam.viscous) return lhs - c(q[1] / pi) * uxx();
            return lhs;
        }
        case SolverKind::FokkerPlanck: {
            const auto s = fokker_planck_scales(q[0]);
            // rate * drift * (sin(x) u)_x = rate * drift * (cos(x) u + sin(x) u_x)
            return ut() - c(s.rate) * uxx() -
                   c(s.rate * s.drift) * (cos(var("x")) * u() + sin(var("x")) * ux());
        }
    }
    throw DomainError("unhandled family " + fam.id);
}

expr::Vocabulary registry_vocabulary() {
    std::set<std::string> leaves;
    for (const auto& f : registry()) {
        for (const auto& name : expr::leaf_names(family_to_tree(f, f.canonical()))) leaves.insert(name);
    }
    // The time variable and the full derivative set are kept even when no
    // template uses them, so the vocabulary does not shrink with the registry.
    for (const char* extra : {"x", "t", "u", "u_t", "u_x", "u_xx", "u_xxx", "u_xxxx", "u_tt"}) leaves.insert(extra);
    return expr::Vocabulary::standard({leaves.begin(), leaves.end()});
}

}  // namespace lemon::pdelab
