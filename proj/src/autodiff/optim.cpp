#include "lemon/autodiff/optim.hpp"

#include <cmath>
#include <numbers>

#include "lemon/common/error.hpp"

namespace lemon::ad {

double Schedule::lr(long step, double base) const {
    if (total_steps <= 0) return base;
    if (step < warmup_steps) return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const long span = std::max(1L, total_steps - warmup_steps);
    const double progress = std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(span));
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return base * (min_ratio + (1.0 - min_ratio) * cosine);
}

Schedule Schedule::cosine(long total, double warmup_fraction) {
    Schedule s;
    s.total_steps = total;
    s.warmup_steps = static_cast<long>(std::llround(warmup_fraction * static_cast<double>(total)));
    return s;
}

double grad_norm(const ParamStore& params) {
    double acc = 0.0;
    for (const auto& p : params.entries()) {
        if (!p.trainable) continue;
        const Var g = p.var.grad();
        if (!g.defined()) continue;
        for (double v : g.value().data) acc += v * v;
    }
    return std::sqrt(acc);
}

double clip_grad_norm(ParamStore& params, double max_norm) {
    const double norm = grad_norm(params);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto& p : params.entries()) {
            if (!p.trainable) continue;
            Var g = p.var.grad();
            if (!g.defined()) continue;
            for (auto& v : g.leaf_value().data) v *= scale;
        }
    }
    return norm;
}

AdamW::AdamW(AdamWConfig cfg, Schedule schedule) : cfg_(cfg), schedule_(schedule) {}

StepStats AdamW::step(ParamStore& params) {
    for (const auto& p : params.entries()) {
        if (!p.trainable) continue;
        const Var g = p.var.grad();
        if (!g.defined()) continue;
        for (double v : g.value().data) {
            if (!std::isfinite(v)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
        }
    }
    StepStats st;
    st.grad_norm = clip_grad_norm(params, cfg_.clip);
    st.lr = schedule_.lr(t_, cfg_.lr);
    ++t_;
    const double lr = st.lr;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& p : params.entries()) {
        if (!p.trainable) continue;
        const Var g = p.var.grad();
        if (!g.defined()) continue;
        auto& w = p.var.leaf_value().data;
        const auto& gd = g.value().data;
        if (!cfg_.use_moments) {
            for (std::size_t i = 0; i < w.size(); ++i) w[i] = w[i] - lr * cfg_.weight_decay * w[i] - lr * gd[i];
            continue;
        }
        auto [it, fresh] = moments_.try_emplace(p.name);
        auto& [m, v] = it->second;
        if (fresh || m.size() != w.size()) {
            m = Tensor(p.var.shape());
            v = Tensor(p.var.shape());
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            w[i] -= lr * cfg_.weight_decay * w[i];
            m.data[i] = cfg_.beta1 * m.data[i] + (1.0 - cfg_.beta1) * gd[i];
            v.data[i] = cfg_.beta2 * v.data[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
    return st;
}

Tensor sgd(const Tensor& p, const Tensor& g, double eta) {
    if (p.shape != g.shape) throw DimensionError("sgd: parameter " + shape_str(p.shape) + " vs gradient " + shape_str(g.shape));
    Tensor out(p.shape);
    for (std::size_t i = 0; i < p.size(); ++i) out.data[i] = p.data[i] - eta * g.data[i];
    return out;
}

void sgd_step(ParamStore& params, double eta) {
    for (auto& p : params.entries()) {
        if (!p.trainable) continue;
        const Var g = p.var.grad();
        if (!g.defined()) continue;
        p.var.leaf_value() = sgd(p.var.value(), g.value(), eta);
    }
}

}  // namespace lemon::ad
