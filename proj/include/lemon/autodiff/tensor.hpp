#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace lemon::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);
/// Numpy-style broadcast of two shapes; DimensionError naming `op` otherwise.
Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op);

/// Dense row-major array of doubles. Plain value type; no graph.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);
    explicit Tensor(Shape s, double fill = 0.0);

    static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
    static Tensor zeros(Shape s) { return Tensor(std::move(s), 0.0); }
    static Tensor ones(Shape s) { return Tensor(std::move(s), 1.0); }
    static Tensor eye(std::size_t n);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t dim() const noexcept { return shape.size(); }
    double item() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Raw kernels shared by the graph ops. They allocate their result.
namespace kernel {

enum class Binary { Add, Sub, Mul, Div };
Tensor binary(const Tensor& a, const Tensor& b, Binary op, const char* name);
/// Sums `x` down to `target` (x's shape must broadcast from target).
Tensor sum_to(const Tensor& x, const Shape& target);
Tensor broadcast_to(const Tensor& x, const Shape& target);
/// [.., m, k] x [.., k, n] with equal batch dims, or [.., m, k] x [k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim);
Tensor softmax_last(const Tensor& x);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);
Tensor pad(const Tensor& x, std::size_t axis, std::size_t before, std::size_t after);
Tensor concat(const std::vector<const Tensor*>& xs, std::size_t axis);
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
Tensor scatter_rows(const Tensor& rows, const std::vector<int>& ids, std::size_t n_rows);

}  // namespace kernel

}  // namespace lemon::ad
