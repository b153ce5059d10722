#include "lemon/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lemon/common/error.hpp"

namespace lemon::eval {

std::vector<double> rel_l2_percent_each(const ad::Tensor& pred, const ad::Tensor& target) {
    if (pred.shape != target.shape) {
        throw DimensionError("rel_l2_percent: prediction " + ad::shape_str(pred.shape) + " vs target " +
                             ad::shape_str(target.shape));
    }
    if (pred.dim() == 0 || pred.shape[0] == 0) return {};
    const std::size_t n = pred.shape[0];
    const std::size_t m = pred.size() / n;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t j = i * m; j < (i + 1) * m; ++j) {
            const double d = pred.data[j] - target.data[j];
            num += d * d;
            den += target.data[j] * target.data[j];
        }
        out[i] = 100.0 * std::sqrt(num) / (std::sqrt(den) + kRelL2Eps);
    }
    return out;
}

double rel_l2_percent(const ad::Tensor& pred, const ad::Tensor& target) {
    return mean_of(rel_l2_percent_each(pred, target));
}

std::vector<double> evaluate(const train::ModelSpec& spec, const ad::Weights& w, const pdelab::Dataset& data,
                             std::size_t batch_size) {
    spec.check_grid(data.grid);
    if (batch_size == 0) throw ConfigError("evaluate: batch size must be >= 1");
    ad::NoGradGuard off;
    std::vector<double> out;
    out.reserve(data.items.size());
    for (std::size_t start = 0; start < data.items.size(); start += batch_size) {
        std::vector<std::size_t> idx;
        for (std::size_t i = start; i < std::min(start + batch_size, data.items.size()); ++i) idx.push_back(i);
        const auto b = spec.batch(data, idx);
        const auto e = rel_l2_percent_each(spec.forward(w, b).value(), b.targets);
        out.insert(out.end(), e.begin(), e.end());
    }
    for (double v : out) {
        if (!std::isfinite(v)) throw NumericError("evaluate: non-finite prediction error");
    }
    return out;
}

double mean_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double sign_test_p(int wins, int n) {
    if (n <= 0 || wins < 0 || wins > n) throw ConfigError("sign test: need 0 <= wins <= n, n >= 1");
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        p += std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) - n * std::log(2.0));
    }
    return std::min(1.0, p);
}

std::uint64_t param_hash(const ad::ParamStore& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= c[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : params.entries()) {
        feed(p.name.data(), p.name.size());
        for (auto d : p.var.shape()) feed(&d, sizeof d);
        const auto& v = p.var.value().data;
        feed(v.data(), v.size() * sizeof(double));
    }
    return h;
}

}  // namespace lemon::eval
