#include "lemon/autodiff/var.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "lemon/common/error.hpp"

namespace lemon::ad {

namespace {

thread_local bool g_grad_enabled = true;

using kernel::Binary;

Var constant(Tensor t) { return Var(std::move(t)); }

}  // namespace

// ---------------------------------------------------------------- Var

Var::Var(Tensor value, bool requires_grad) : n_(std::make_shared<Node>()) {
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
}

const Tensor& Var::value() const {
    if (!n_) throw GraphError("use of an undefined Var");
    return n_->value;
}

bool Var::requires_grad() const { return n_ && n_->requires_grad; }
bool Var::is_leaf() const { return n_ && !n_->backward; }
const char* Var::op() const { return n_ ? n_->op : "undefined"; }

Var Var::grad() const {
    if (!n_ || !n_->grad) return {};
    return Var(n_->grad);
}

void Var::zero_grad() {
    if (n_) n_->grad.reset();
}

void Var::set_grad(Tensor g) {
    if (!n_) throw GraphError("use of an undefined Var");
    if (n_->backward) throw GraphError("set_grad: '" + std::string(n_->op) + "' result is not a leaf");
    if (g.shape != n_->value.shape) throw DimensionError("set_grad: gradient shape does not match the leaf");
    n_->grad = std::make_shared<Node>();
    n_->grad->value = std::move(g);
}

Var Var::detach(bool requires_grad) const { return Var(value(), requires_grad); }

Tensor& Var::leaf_value() {
    if (!n_) throw GraphError("use of an undefined Var");
    if (n_->backward) throw GraphError("leaf_value: '" + std::string(n_->op) + "' result is not a leaf");
    return n_->value;
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

namespace {

class GradModeGuard {
public:
    explicit GradModeGuard(bool on) : prev_(g_grad_enabled) { g_grad_enabled = on; }
    ~GradModeGuard() { g_grad_enabled = prev_; }

private:
    bool prev_;
};

}  // namespace

Var make_op(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, const char* op) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    if (g_grad_enabled) {
        bool any = false;
        for (const auto& in : inputs) any = any || in.requires_grad();
        if (any) {
            node->requires_grad = true;
            node->backward = std::move(fn);
            for (const auto& in : inputs) node->parents.push_back(in.node());
        }
    }
    return Var(std::move(node));
}

// ---------------------------------------------------------------- engine

namespace {

/// Nodes reachable from root through requires-grad edges, in topological
/// order (parents before children).
std::vector<std::shared_ptr<Node>> topo_order(const std::shared_ptr<Node>& root) {
    std::vector<std::shared_ptr<Node>> order;
    std::unordered_set<Node*> seen{root.get()};
    std::vector<std::pair<std::shared_ptr<Node>, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            const auto& p = node->parents[next++];
            if (p->requires_grad && seen.insert(p.get()).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

/// Runs the reverse sweep and returns the gradient of every visited node.
std::unordered_map<Node*, Var> sweep(const Var& output, const Var& grad_output,
                                     const std::vector<std::shared_ptr<Node>>& order) {
    std::unordered_map<Node*, Var> grads;
    if (grad_output.defined()) {
        if (grad_output.shape() != output.shape()) {
            throw DimensionError("grad: grad_output shape " + shape_str(grad_output.shape()) + " differs from output " +
                                 shape_str(output.shape()));
        }
        grads[output.node().get()] = grad_output;
    } else {
        grads[output.node().get()] = constant(Tensor::ones(output.shape()));
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const auto& node = *it;
        if (!node->backward) continue;
        auto found = grads.find(node.get());
        if (found == grads.end()) continue;
        const Var g = found->second;
        auto pg = node->backward(g, Var(node));
        if (pg.size() != node->parents.size()) {
            throw GraphError(std::string("backward rule of '") + node->op + "' returned the wrong number of gradients");
        }
        for (std::size_t i = 0; i < pg.size(); ++i) {
            Node* p = node->parents[i].get();
            if (!p->requires_grad || !pg[i].defined()) continue;
            if (pg[i].shape() != p->value.shape) {
                throw GraphError(std::string("backward rule of '") + node->op + "' produced gradient of shape " +
                                 shape_str(pg[i].shape()) + " for input " + shape_str(p->value.shape));
            }
            auto slot = grads.find(p);
            if (slot == grads.end()) {
                grads.emplace(p, pg[i]);
            } else {
                slot->second = slot->second + pg[i];
            }
        }
    }
    return grads;
}

}  // namespace

void backward(const Var& loss) {
    if (!loss.defined()) throw GraphError("backward: undefined loss");
    if (loss.size() != 1) throw GraphError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    if (!loss.requires_grad()) throw GraphError("backward: loss is detached from every parameter");
    const auto& root = loss.node();
    if (root->consumed) throw GraphError("backward: graph already used by a previous backward()");
    const auto order = topo_order(root);
    for (const auto& n : order) {
        if (!n->backward && n->grad) {
            throw GraphError("backward: a leaf still holds a gradient; call zero_grad() before another backward()");
        }
    }
    std::unordered_map<Node*, Var> grads;
    {
        GradModeGuard off(false);
        grads = sweep(loss, {}, order);
    }
    for (const auto& n : order) {
        if (n->backward) continue;
        auto it = grads.find(n.get());
        if (it == grads.end()) continue;
        n->grad = std::make_shared<Node>();
        n->grad->value = it->second.value();
        n->grad->op = "grad";
    }
    root->consumed = true;
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, const Var& grad_output, bool create_graph) {
    if (!output.defined()) throw GraphError("grad: undefined output");
    std::vector<Var> result;
    if (!output.requires_grad()) {
        for (const auto& in : inputs) result.push_back(constant(Tensor::zeros(in.shape())));
        return result;
    }
    const auto order = topo_order(output.node());
    std::unordered_map<Node*, Var> grads;
    {
        GradModeGuard mode(create_graph);
        grads = sweep(output, grad_output, order);
    }
    for (const auto& in : inputs) {
        auto it = grads.find(in.node().get());
        if (it == grads.end()) {
            result.push_back(constant(Tensor::zeros(in.shape())));
        } else {
            result.push_back(create_graph ? it->second : constant(it->second.value()));
        }
    }
    return result;
}

// ---------------------------------------------------------------- elementwise

namespace {

Var binary_op(const Var& a, const Var& b, Binary op, const char* name, BackwardFn fn) {
    return make_op(kernel::binary(a.value(), b.value(), op, name), {a, b}, std::move(fn), name);
}

template <class F>
Tensor map(const Tensor& x, F f) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = f(x.data[i]);
    return out;
}

}  // namespace

Var operator+(const Var& a, const Var& b) {
    return binary_op(a, b, Binary::Add, "add", [a, b](const Var& g, const Var&) {
        return std::vector<Var>{sum_to(g, a.shape()), sum_to(g, b.shape())};
    });
}

Var operator-(const Var& a, const Var& b) {
    return binary_op(a, b, Binary::Sub, "sub", [a, b](const Var& g, const Var&) {
        return std::vector<Var>{sum_to(g, a.shape()), sum_to(-g, b.shape())};
    });
}

Var operator*(const Var& a, const Var& b) {
    return binary_op(a, b, Binary::Mul, "mul", [a, b](const Var& g, const Var&) {
        std::vector<Var> r(2);
        if (a.requires_grad()) r[0] = sum_to(g * b, a.shape());
        if (b.requires_grad()) r[1] = sum_to(g * a, b.shape());
        return r;
    });
}

Var operator/(const Var& a, const Var& b) {
    return binary_op(a, b, Binary::Div, "div", [a, b](const Var& g, const Var& out) {
        std::vector<Var> r(2);
        if (a.requires_grad()) r[0] = sum_to(g / b, a.shape());
        if (b.requires_grad()) r[1] = sum_to(-(g * out / b), b.shape());
        return r;
    });
}

Var operator-(const Var& a) {
    return make_op(map(a.value(), [](double v) { return -v; }), {a},
                   [](const Var& g, const Var&) { return std::vector<Var>{-g}; }, "neg");
}

Var operator+(const Var& a, double s) {
    return make_op(map(a.value(), [s](double v) { return v + s; }), {a},
                   [](const Var& g, const Var&) { return std::vector<Var>{g}; }, "add_scalar");
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-a) + s; }

Var operator*(const Var& a, double s) {
    return make_op(map(a.value(), [s](double v) { return v * s; }), {a},
                   [s](const Var& g, const Var&) { return std::vector<Var>{g * s}; }, "mul_scalar");
}
Var operator*(double s, const Var& a) { return a * s; }
Var operator/(const Var& a, double s) { return a * (1.0 / s); }

Var exp(const Var& x) {
    return make_op(map(x.value(), [](double v) { return std::exp(v); }), {x},
                   [](const Var& g, const Var& out) { return std::vector<Var>{g * out}; }, "exp");
}

Var log(const Var& x) {
    return make_op(map(x.value(), [](double v) { return std::log(v); }), {x},
                   [x](const Var& g, const Var&) { return std::vector<Var>{g / x}; }, "log");
}

Var tanh(const Var& x) {
    return make_op(map(x.value(), [](double v) { return std::tanh(v); }), {x},
                   [](const Var& g, const Var& out) { return std::vector<Var>{g * (1.0 - square(out))}; }, "tanh");
}

Var sin(const Var& x) {
    return make_op(map(x.value(), [](double v) { return std::sin(v); }), {x},
                   [x](const Var& g, const Var&) { return std::vector<Var>{g * cos(x)}; }, "sin");
}

Var cos(const Var& x) {
    return make_op(map(x.value(), [](double v) { return std::cos(v); }), {x},
                   [x](const Var& g, const Var&) { return std::vector<Var>{-(g * sin(x))}; }, "cos");
}

Var sqrt(const Var& x) {
    return make_op(map(x.value(), [](double v) { return std::sqrt(v); }), {x},
                   [](const Var& g, const Var& out) { return std::vector<Var>{g / out * 0.5}; }, "sqrt");
}

Var relu(const Var& x) {
    return make_op(map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {x},
                   [x](const Var& g, const Var&) {
                       return std::vector<Var>{g * constant(map(x.value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; }))};
                   },
                   "relu");
}

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

/// d gelu / dx as a Var expression (differentiable again).
Var gelu_grad(const Var& x) {
    const Var x2 = square(x);
    const Var t = tanh((x + x2 * x * kGeluA) * kGeluC);
    return (t + 1.0) * 0.5 + x * (1.0 - square(t)) * (x2 * (3.0 * kGeluA) + 1.0) * (0.5 * kGeluC);
}

}  // namespace

Var gelu(const Var& x) {
    return make_op(map(x.value(),
                       [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); }),
                   {x}, [x](const Var& g, const Var&) { return std::vector<Var>{g * gelu_grad(x)}; }, "gelu");
}

Var square(const Var& x) {
    return make_op(map(x.value(), [](double v) { return v * v; }), {x},
                   [x](const Var& g, const Var&) { return std::vector<Var>{g * x * 2.0}; }, "square");
}

Var pow(const Var& x, double p) {
    return make_op(map(x.value(), [p](double v) { return std::pow(v, p); }), {x},
                   [x, p](const Var& g, const Var&) { return std::vector<Var>{g * pow(x, p - 1.0) * p}; }, "pow");
}

// ---------------------------------------------------------------- shape

Var reshape(const Var& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    Tensor t = x.value();
    t.shape = std::move(shape);
    const Shape orig = x.shape();
    return make_op(std::move(t), {x},
                   [orig](const Var& g, const Var&) { return std::vector<Var>{reshape(g, orig)}; }, "reshape");
}

Var permute(const Var& x, std::vector<std::size_t> perm) {
    Tensor t = kernel::permute(x.value(), perm);
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
    return make_op(std::move(t), {x}, [inv](const Var& g, const Var&) { return std::vector<Var>{permute(g, inv)}; },
                   "permute");
}

Var transpose(const Var& x) {
    if (x.dim() < 2) throw DimensionError("transpose: rank " + std::to_string(x.dim()) + " < 2");
    std::vector<std::size_t> perm(x.dim());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
    return permute(x, perm);
}

Var broadcast_to(const Var& x, Shape shape) {
    if (x.shape() == shape) return x;
    const Shape orig = x.shape();
    return make_op(kernel::broadcast_to(x.value(), shape), {x},
                   [orig](const Var& g, const Var&) { return std::vector<Var>{sum_to(g, orig)}; }, "broadcast_to");
}

Var sum_to(const Var& x, Shape shape) {
    if (x.shape() == shape) return x;
    const Shape orig = x.shape();
    return make_op(kernel::sum_to(x.value(), shape), {x},
                   [orig](const Var& g, const Var&) { return std::vector<Var>{broadcast_to(g, orig)}; }, "sum_to");
}

Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t len) {
    Tensor t = kernel::slice(x.value(), axis, start, len);
    const std::size_t total = x.shape()[axis];
    return make_op(std::move(t), {x},
                   [=](const Var& g, const Var&) {
                       return std::vector<Var>{pad(g, axis, start, total - start - len)};
                   },
                   "slice");
}

Var pad(const Var& x, std::size_t axis, std::size_t before, std::size_t after) {
    Tensor t = kernel::pad(x.value(), axis, before, after);
    const std::size_t len = x.shape()[axis];
    return make_op(std::move(t), {x},
                   [=](const Var& g, const Var&) { return std::vector<Var>{slice(g, axis, before, len)}; }, "pad");
}

Var concat(const std::vector<Var>& xs, std::size_t axis) {
    std::vector<const Tensor*> ts;
    std::vector<std::size_t> lens;
    for (const auto& x : xs) {
        ts.push_back(&x.value());
        lens.push_back(x.shape().at(axis));
    }
    return make_op(kernel::concat(ts, axis), xs,
                   [axis, lens](const Var& g, const Var&) {
                       std::vector<Var> r;
                       std::size_t off = 0;
                       for (auto l : lens) {
                           r.push_back(slice(g, axis, off, l));
                           off += l;
                       }
                       return r;
                   },
                   "concat");
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().data) s += v;
    const Shape orig = x.shape();
    return make_op(Tensor::scalar(s), {x},
                   [orig](const Var& g, const Var&) { return std::vector<Var>{broadcast_to(g, orig)}; }, "sum");
}

Var sum(const Var& x, std::size_t axis, bool keepdim) {
    Tensor t = kernel::sum_axis(x.value(), axis, keepdim);
    const Shape orig = x.shape();
    Shape kept = orig;
    kept[axis] = 1;
    return make_op(std::move(t), {x},
                   [orig, kept, keepdim](const Var& g, const Var&) {
                       return std::vector<Var>{broadcast_to(keepdim ? g : reshape(g, kept), orig)};
                   },
                   "sum_axis");
}

Var mean(const Var& x) { return sum(x) * (1.0 / static_cast<double>(x.size())); }

Var mean(const Var& x, std::size_t axis, bool keepdim) {
    if (axis >= x.dim()) throw DimensionError("mean: axis out of range for " + shape_str(x.shape()));
    return sum(x, axis, keepdim) * (1.0 / static_cast<double>(x.shape()[axis]));
}

// ---------------------------------------------------------------- linear algebra

Var matmul(const Var& a, const Var& b) {
    Tensor t = kernel::matmul(a.value(), b.value());
    return make_op(std::move(t), {a, b},
                   [a, b](const Var& g, const Var&) {
                       std::vector<Var> r(2);
                       if (a.requires_grad()) r[0] = matmul(g, transpose(b));
                       if (b.requires_grad()) {
                           if (b.dim() == 2 && a.dim() > 2) {
                               const std::size_t k = a.shape().back();
                               const std::size_t n = b.shape().back();
                               r[1] = matmul(transpose(reshape(a, {a.size() / k, k})), reshape(g, {g.size() / n, n}));
                           } else {
                               r[1] = matmul(transpose(a), g);
                           }
                       }
                       return r;
                   },
                   "matmul");
}

Var softmax(const Var& x) {
    return make_op(kernel::softmax_last(x.value()), {x},
                   [](const Var& g, const Var& out) {
                       const std::size_t last = out.dim() - 1;
                       return std::vector<Var>{out * (g - sum(g * out, last, true))};
                   },
                   "softmax");
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    if (x.dim() == 0) throw DimensionError("layer_norm: scalar input");
    const std::size_t last = x.dim() - 1;
    if (gamma.shape() != Shape{x.shape()[last]} || beta.shape() != gamma.shape()) {
        throw DimensionError("layer_norm: gain/bias shape " + shape_str(gamma.shape()) + " vs features " +
                             std::to_string(x.shape()[last]));
    }
    const Var xc = x - mean(x, last, true);
    const Var var = mean(square(xc), last, true);
    return xc / sqrt(var + eps) * gamma + beta;
}

namespace {

Var gather(const Var& table, const std::vector<int>& ids) {
    const std::size_t rows = table.shape()[0];
    return make_op(kernel::gather_rows(table.value(), ids), {table},
                   [ids, rows](const Var& g, const Var&) { return std::vector<Var>{scatter_rows(g, ids, rows)}; },
                   "gather");
}

}  // namespace

Var embedding(const Var& table, const std::vector<int>& ids, Shape prefix) {
    if (table.dim() != 2) throw DimensionError("embedding: table must be 2-D, got " + shape_str(table.shape()));
    if (numel(prefix) != ids.size()) throw DimensionError("embedding: id count does not match prefix shape");
    prefix.push_back(table.shape()[1]);
    return reshape(gather(table, ids), std::move(prefix));
}

Var scatter_rows(const Var& rows, const std::vector<int>& ids, std::size_t n_rows) {
    return make_op(kernel::scatter_rows(rows.value(), ids, n_rows), {rows},
                   [ids](const Var& g, const Var&) { return std::vector<Var>{gather(g, ids)}; }, "scatter_rows");
}

}  // namespace lemon::ad
