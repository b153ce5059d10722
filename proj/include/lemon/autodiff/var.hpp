#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lemon/autodiff/tensor.hpp"

namespace lemon::ad {

class Var;

/// Local backward rule: given the output gradient and the output itself,
/// returns one gradient per parent (an undefined Var means "none").
/// Rules are written with Var ops so gradients can be differentiated again.
using BackwardFn = std::function<std::vector<Var>(const Var& grad, const Var& out)>;

struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;
    const char* op = "leaf";
    // Leaf gradient written by backward(); always a constant.
    std::shared_ptr<Node> grad;
    bool consumed = false;
};

/// Handle to a value in the computation graph. Copies share the node.
class Var {
public:
    Var() = default;
    /// Leaf holding `value`.
    explicit Var(Tensor value, bool requires_grad = false);
    explicit Var(std::shared_ptr<Node> node) : n_(std::move(node)) {}

    static Var scalar(double v) { return Var(Tensor::scalar(v)); }

    bool defined() const noexcept { return static_cast<bool>(n_); }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    std::size_t size() const { return value().size(); }
    std::size_t dim() const { return value().dim(); }
    double item() const { return value().item(); }
    bool requires_grad() const;
    bool is_leaf() const;
    const char* op() const;

    /// Gradient stored by backward(); undefined when none.
    Var grad() const;
    void zero_grad();
    /// Stores an externally computed gradient on a leaf (meta-updates).
    void set_grad(Tensor g);
    /// New leaf with the same value and no history.
    Var detach(bool requires_grad = false) const;
    /// Writable value of a leaf (optimizer updates). GraphError otherwise.
    Tensor& leaf_value();

    const std::shared_ptr<Node>& node() const noexcept { return n_; }

private:
    std::shared_ptr<Node> n_;
};

/// Gradient recording switch (per thread).
bool grad_enabled();
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

/// Builds an op result; records history only when grad mode is on and some
/// input requires grad.
Var make_op(Tensor value, const std::vector<Var>& inputs, BackwardFn fn, const char* op);

/// Reverse pass from a scalar loss into every leaf that requires grad.
/// GraphError when the loss is detached or not scalar, when the graph was
/// already consumed by a previous backward(), or when a leaf still holds a
/// gradient (call zero_grad() first).
void backward(const Var& loss);

/// d(output)/d(inputs) without touching stored leaf gradients. With
/// create_graph the results carry history and can be differentiated again.
/// Inputs the output does not depend on get zero gradients.
std::vector<Var> grad(const Var& output, const std::vector<Var>& inputs, const Var& grad_output = {},
                      bool create_graph = false);

// ---- elementwise
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator/(const Var& a, const Var& b);
Var operator-(const Var& a);
Var operator+(const Var& a, double s);
Var operator+(double s, const Var& a);
Var operator-(const Var& a, double s);
Var operator-(double s, const Var& a);
Var operator*(const Var& a, double s);
Var operator*(double s, const Var& a);
Var operator/(const Var& a, double s);

Var exp(const Var& x);
Var log(const Var& x);
Var tanh(const Var& x);
Var sin(const Var& x);
Var cos(const Var& x);
Var sqrt(const Var& x);
Var relu(const Var& x);
/// tanh approximation.
Var gelu(const Var& x);
Var square(const Var& x);
Var pow(const Var& x, double p);

// ---- shape
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, std::vector<std::size_t> perm);
/// Swaps the last two axes.
Var transpose(const Var& x);
Var broadcast_to(const Var& x, Shape shape);
Var sum_to(const Var& x, Shape shape);
Var slice(const Var& x, std::size_t axis, std::size_t start, std::size_t len);
Var pad(const Var& x, std::size_t axis, std::size_t before, std::size_t after);
Var concat(const std::vector<Var>& xs, std::size_t axis);

// ---- reductions
Var sum(const Var& x);
Var sum(const Var& x, std::size_t axis, bool keepdim = false);
Var mean(const Var& x);
Var mean(const Var& x, std::size_t axis, bool keepdim = false);

// ---- linear algebra and layers
Var matmul(const Var& a, const Var& b);
/// Softmax over the last axis.
Var softmax(const Var& x);
/// Normalizes over the last axis, then scales by gamma and shifts by beta.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
/// Rows of `table` [V x d] selected by ids; result shape prefix + [d].
Var embedding(const Var& table, const std::vector<int>& ids, Shape prefix);
/// Adjoint of embedding: adds rows into a [n_rows x d] zero table.
Var scatter_rows(const Var& rows, const std::vector<int>& ids, std::size_t n_rows);

}  // namespace lemon::ad
