#include "lemon/autodiff/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lemon/common/error.hpp"

namespace lemon::ad {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
    const std::size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        const std::size_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1) {
            throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " + shape_str(b));
        }
        out[i] = da == 1 ? db : da;
    }
    return out;
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) {
        throw DimensionError("tensor: " + std::to_string(data.size()) + " values for shape " + shape_str(shape));
    }
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor Tensor::eye(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.data[i * n + i] = 1.0;
    return t;
}

double Tensor::item() const {
    if (data.size() != 1) throw DimensionError("item: tensor of shape " + shape_str(shape) + " is not a scalar");
    return data[0];
}

namespace kernel {

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
    std::vector<std::size_t> st(s.size());
    std::size_t acc = 1;
    for (std::size_t i = s.size(); i-- > 0;) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

/// Strides of `s` aligned to an output of rank `rank`; broadcast dims get 0.
std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
    const auto st = strides_of(s);
    std::vector<std::size_t> r(out.size(), 0);
    const std::size_t off = out.size() - s.size();
    for (std::size_t i = 0; i < s.size(); ++i) r[off + i] = s[i] == 1 ? 0 : st[i];
    return r;
}

/// True when `s` equals the trailing dims of `out` after dropping leading 1s.
bool is_suffix(const Shape& s, const Shape& out) {
    std::size_t k = 0;
    while (k < s.size() && s[k] == 1) ++k;
    const std::size_t len = s.size() - k;
    if (len > out.size()) return false;
    return std::equal(s.begin() + static_cast<std::ptrdiff_t>(k), s.end(),
                      out.end() - static_cast<std::ptrdiff_t>(len));
}

template <class F>
void for_each_index(const Shape& out, const std::vector<std::size_t>& sa, const std::vector<std::size_t>& sb, F f) {
    const std::size_t n = numel(out);
    const std::size_t rank = out.size();
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f(i, oa, ob);
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out[d]) {
                oa += sa[d];
                ob += sb[d];
                break;
            }
            oa -= sa[d] * (out[d] - 1);
            ob -= sb[d] * (out[d] - 1);
            idx[d] = 0;
        }
    }
}

template <class Op>
Tensor apply_binary(const Tensor& a, const Tensor& b, const char* name, Op op) {
    if (a.shape == b.shape) {
        Tensor out(a.shape);
        for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = op(a.data[i], b.data[i]);
        return out;
    }
    const Shape os = broadcast_shapes(a.shape, b.shape, name);
    Tensor out(os);
    const std::size_t n = out.size();
    if (os == a.shape && is_suffix(b.shape, os)) {
        const std::size_t nb = b.size();
        for (std::size_t i = 0; i < n; ++i) out.data[i] = op(a.data[i], b.data[i % nb]);
        return out;
    }
    if (os == b.shape && is_suffix(a.shape, os)) {
        const std::size_t na = a.size();
        for (std::size_t i = 0; i < n; ++i) out.data[i] = op(a.data[i % na], b.data[i]);
        return out;
    }
    for_each_index(os, broadcast_strides(a.shape, os), broadcast_strides(b.shape, os),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) { out.data[i] = op(a.data[ia], b.data[ib]); });
    return out;
}

}  // namespace

Tensor binary(const Tensor& a, const Tensor& b, Binary op, const char* name) {
    switch (op) {
        case Binary::Add:
            return apply_binary(a, b, name, [](double x, double y) { return x + y; });
        case Binary::Sub:
            return apply_binary(a, b, name, [](double x, double y) { return x - y; });
        case Binary::Mul:
            return apply_binary(a, b, name, [](double x, double y) { return x * y; });
        case Binary::Div:
            return apply_binary(a, b, name, [](double x, double y) { return x / y; });
    }
    return {};
}

Tensor sum_to(const Tensor& x, const Shape& target) {
    if (x.shape == target) return x;
    const Shape check = broadcast_shapes(target, x.shape, "sum_to");
    if (check != x.shape) {
        throw DimensionError("sum_to: " + shape_str(x.shape) + " does not broadcast from " + shape_str(target));
    }
    Tensor out(target);
    if (out.size() == 1) {
        double s = 0.0;
        for (double v : x.data) s += v;
        out.data[0] = s;
        return out;
    }
    if (is_suffix(target, x.shape)) {
        const std::size_t nt = out.size();
        for (std::size_t i = 0; i < x.size(); ++i) out.data[i % nt] += x.data[i];
        return out;
    }
    const auto st = broadcast_strides(target, x.shape);
    const std::vector<std::size_t> zero(x.shape.size(), 0);
    for_each_index(x.shape, st, zero, [&](std::size_t i, std::size_t it, std::size_t) { out.data[it] += x.data[i]; });
    return out;
}

Tensor broadcast_to(const Tensor& x, const Shape& target) {
    if (x.shape == target) return x;
    const Shape check = broadcast_shapes(x.shape, target, "broadcast_to");
    if (check != target) {
        throw DimensionError("broadcast_to: " + shape_str(x.shape) + " does not broadcast to " + shape_str(target));
    }
    Tensor out(target);
    if (is_suffix(x.shape, target)) {
        const std::size_t nx = x.size();
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = x.data[i % nx];
        return out;
    }
    const auto st = broadcast_strides(x.shape, target);
    const std::vector<std::size_t> zero(target.size(), 0);
    for_each_index(target, st, zero, [&](std::size_t i, std::size_t ix, std::size_t) { out.data[i] = x.data[ix]; });
    return out;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// c[m x n] = a[m x k] * b[k x n], all row-major and contiguous.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto im = static_cast<Eigen::Index>(m);
    const auto ik = static_cast<Eigen::Index>(k);
    const auto in = static_cast<Eigen::Index>(n);
    Eigen::Map<RowMat>(c, im, in).noalias() = Eigen::Map<const RowMat>(a, im, ik) * Eigen::Map<const RowMat>(b, ik, in);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.dim() < 2 || b.dim() < 2) {
        throw DimensionError("matmul: operands need rank >= 2, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
    }
    const std::size_t m = a.shape[a.dim() - 2];
    const std::size_t k = a.shape[a.dim() - 1];
    const std::size_t kb = b.shape[b.dim() - 2];
    const std::size_t n = b.shape[b.dim() - 1];
    if (k != kb) throw DimensionError("matmul: inner dims differ in " + shape_str(a.shape) + " x " + shape_str(b.shape));
    Shape os(a.shape.begin(), a.shape.end() - 2);
    if (b.dim() == 2) {
        os.push_back(m);
        os.push_back(n);
        Tensor out(os);
        gemm(a.data.data(), b.data.data(), out.data.data(), a.size() / k, k, n);
        return out;
    }
    const Shape bb(b.shape.begin(), b.shape.end() - 2);
    if (os != bb) {
        throw DimensionError("matmul: batch dims differ in " + shape_str(a.shape) + " x " + shape_str(b.shape));
    }
    os.push_back(m);
    os.push_back(n);
    Tensor out(os);
    const std::size_t batch = numel(bb);
    for (std::size_t i = 0; i < batch; ++i) {
        gemm(a.data.data() + i * m * k, b.data.data() + i * k * n, out.data.data() + i * m * n, m, k, n);
    }
    return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
    const std::size_t r = x.dim();
    if (perm.size() != r) throw DimensionError("permute: permutation rank differs from tensor rank");
    std::vector<bool> seen(r, false);
    for (auto p : perm) {
        if (p >= r || seen[p]) throw DimensionError("permute: invalid permutation");
        seen[p] = true;
    }
    Shape os(r);
    for (std::size_t i = 0; i < r; ++i) os[i] = x.shape[perm[i]];
    Tensor out(os);
    const auto xs = strides_of(x.shape);
    std::vector<std::size_t> src(r);
    for (std::size_t i = 0; i < r; ++i) src[i] = xs[perm[i]];
    const std::vector<std::size_t> zero(r, 0);
    for_each_index(os, src, zero, [&](std::size_t i, std::size_t ix, std::size_t) { out.data[i] = x.data[ix]; });
    return out;
}

Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim) {
    if (axis >= x.dim()) throw DimensionError("sum: axis out of range for " + shape_str(x.shape));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape[i];
    const std::size_t len = x.shape[axis];
    Shape os = x.shape;
    if (keepdim) {
        os[axis] = 1;
    } else {
        os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
    }
    Tensor out(os);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t l = 0; l < len; ++l) {
            const double* src = x.data.data() + (o * len + l) * inner;
            double* dst = out.data.data() + o * inner;
            for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    }
    return out;
}

Tensor softmax_last(const Tensor& x) {
    if (x.dim() == 0) throw DimensionError("softmax: scalar input");
    const std::size_t n = x.shape.back();
    Tensor out(x.shape);
    for (std::size_t r = 0; r < x.size() / n; ++r) {
        const double* src = x.data.data() + r * n;
        double* dst = out.data.data() + r * n;
        double mx = -INFINITY;
        for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, src[i]);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dst[i] = std::exp(src[i] - mx);
            s += dst[i];
        }
        for (std::size_t i = 0; i < n; ++i) dst[i] /= s;
    }
    return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= x.dim() || start + len > x.shape[axis]) {
        throw DimensionError("slice: range out of bounds for " + shape_str(x.shape));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape[i];
    Shape os = x.shape;
    os[axis] = len;
    Tensor out(os);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>((o * x.shape[axis] + start) * inner),
                    len * inner, out.data.begin() + static_cast<std::ptrdiff_t>(o * len * inner));
    }
    return out;
}

Tensor pad(const Tensor& x, std::size_t axis, std::size_t before, std::size_t after) {
    if (axis >= x.dim()) throw DimensionError("pad: axis out of range for " + shape_str(x.shape));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= x.shape[i];
    for (std::size_t i = axis + 1; i < x.dim(); ++i) inner *= x.shape[i];
    const std::size_t len = x.shape[axis];
    Shape os = x.shape;
    os[axis] = len + before + after;
    Tensor out(os);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                    out.data.begin() + static_cast<std::ptrdiff_t>((o * os[axis] + before) * inner));
    }
    return out;
}

Tensor concat(const std::vector<const Tensor*>& xs, std::size_t axis) {
    if (xs.empty()) throw DimensionError("concat: no inputs");
    const Shape& s0 = xs[0]->shape;
    if (axis >= s0.size()) throw DimensionError("concat: axis out of range for " + shape_str(s0));
    std::size_t total = 0;
    for (const auto* t : xs) {
        if (t->dim() != s0.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t i = 0; i < s0.size(); ++i) {
            if (i != axis && t->shape[i] != s0[i]) {
                throw DimensionError("concat: shapes " + shape_str(s0) + " and " + shape_str(t->shape) + " differ");
            }
        }
        total += t->shape[axis];
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
    for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
    Shape os = s0;
    os[axis] = total;
    Tensor out(os);
    std::size_t offset = 0;
    for (const auto* t : xs) {
        const std::size_t len = t->shape[axis];
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy_n(t->data.begin() + static_cast<std::ptrdiff_t>(o * len * inner), len * inner,
                        out.data.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
        }
        offset += len;
    }
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
    if (table.dim() != 2) throw DimensionError("embedding: table must be 2-D, got " + shape_str(table.shape));
    const std::size_t rows = table.shape[0], d = table.shape[1];
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= rows) {
            throw DimensionError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                                 std::to_string(rows) + " rows");
        }
        std::copy_n(table.data.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(ids[i]) * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    return out;
}

Tensor scatter_rows(const Tensor& rows, const std::vector<int>& ids, std::size_t n_rows) {
    if (rows.dim() != 2 || rows.shape[0] != ids.size()) throw DimensionError("scatter_rows: shape mismatch");
    const std::size_t d = rows.shape[1];
    Tensor out({n_rows, d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        double* dst = out.data.data() + static_cast<std::size_t>(ids[i]) * d;
        const double* src = rows.data.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
    return out;
}

}  // namespace kernel

}  // namespace lemon::ad
