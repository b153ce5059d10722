#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lemon::expr {

enum class Kind {
    // binary
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    // unary
    Sin,
    Cos,
    Exp,
    Abs,
    Neg,
    // leaves
    Derivative,
    Variable,
    Constant,
};

/// Number of children a node of this kind must have.
int arity(Kind kind);
bool is_leaf(Kind kind);

/// x, t, u and indexed coordinates such as x1.
bool is_variable_name(std::string_view name);
/// Atomic derivative symbols: u_t, u_x, u_xx, u_xxx, u_xxxx, u_tt, and
/// indexed forms such as u_x2.
bool is_derivative_name(std::string_view name);

/// Node of an operator expression tree. Immutable value type.
class ExprNode {
public:
    static ExprNode constant(double value);
    static ExprNode variable(std::string name);
    static ExprNode derivative(std::string name);
    static ExprNode unary(Kind kind, ExprNode child);
    static ExprNode binary(Kind kind, ExprNode lhs, ExprNode rhs);

    /// Unchecked construction. Used by the parser and by tests that need a
    /// malformed tree; everything else goes through the checked factories.
    static ExprNode raw(Kind kind, std::vector<ExprNode> children, double value = 0.0,
                        std::string name = {});

    Kind kind() const noexcept { return kind_; }
    const std::vector<ExprNode>& children() const noexcept { return children_; }
    double value() const noexcept { return value_; }
    const std::string& name() const noexcept { return name_; }

    std::size_t node_count() const;
    std::size_t constant_count() const;
    std::size_t depth() const;

    /// Throws StructuralError on arity mismatch, bad leaf names or
    /// non-finite constants anywhere in the tree.
    void validate() const;

    friend bool operator==(const ExprNode& a, const ExprNode& b);
    friend bool operator!=(const ExprNode& a, const ExprNode& b) { return !(a == b); }

private:
    ExprNode() = default;

    Kind kind_ = Kind::Constant;
    std::vector<ExprNode> children_;
    double value_ = 0.0;
    std::string name_;
};

// Builders that keep family templates readable.
ExprNode operator+(ExprNode a, ExprNode b);
ExprNode operator-(ExprNode a, ExprNode b);
ExprNode operator*(ExprNode a, ExprNode b);
ExprNode operator/(ExprNode a, ExprNode b);
ExprNode pow(ExprNode base, ExprNode exponent);
ExprNode sin(ExprNode a);
ExprNode cos(ExprNode a);
ExprNode exp(ExprNode a);
ExprNode abs(ExprNode a);
ExprNode neg(ExprNode a);
ExprNode c(double value);
ExprNode var(std::string name);
ExprNode d(std::string name);

/// Leaf values for evaluate(): variables and derivative symbols by name.
using Environment = std::unordered_map<std::string, double>;

/// Numeric value of the tree. Unknown leaf names raise DomainError.
double evaluate(const ExprNode& tree, const Environment& env);

/// Infix rendering for logs and error messages.
std::string to_infix(const ExprNode& tree);

/// Every leaf name (variables and derivatives) that occurs in the tree.
std::vector<std::string> leaf_names(const ExprNode& tree);

}  // namespace lemon::expr
