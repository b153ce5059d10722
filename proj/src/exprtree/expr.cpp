#include "lemon/exprtree/expr.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "lemon/common/error.hpp"

namespace lemon::expr {

int arity(Kind kind) {
    switch (kind) {
        case Kind::Add:
        case Kind::Sub:
        case Kind::Mul:
        case Kind::Div:
        case Kind::Pow:
            return 2;
        case Kind::Sin:
        case Kind::Cos:
        case Kind::Exp:
        case Kind::Abs:
        case Kind::Neg:
            return 1;
        case Kind::Derivative:
        case Kind::Variable:
        case Kind::Constant:
            return 0;
    }
    return 0;
}

bool is_leaf(Kind kind) { return arity(kind) == 0; }

namespace {

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

}  // namespace

bool is_variable_name(std::string_view name) {
    if (name == "x" || name == "t" || name == "u") return true;
    return name.size() >= 2 && name[0] == 'x' && all_digits(name.substr(1));
}

bool is_derivative_name(std::string_view name) {
    if (name.size() < 3 || name.substr(0, 2) != "u_") return false;
    const auto rest = name.substr(2);
    // Differentiation letters first, then an optional coordinate index.
    std::size_t i = 0;
    while (i < rest.size() && (rest[i] == 't' || rest[i] == 'x')) ++i;
    if (i == 0) return false;
    return i == rest.size() || all_digits(rest.substr(i));
}

ExprNode ExprNode::raw(Kind kind, std::vector<ExprNode> children, double value, std::string name) {
    ExprNode n;
    n.kind_ = kind;
    n.children_ = std::move(children);
    n.value_ = value;
    n.name_ = std::move(name);
    return n;
}

ExprNode ExprNode::constant(double value) {
    if (!std::isfinite(value)) throw StructuralError("constant must be finite");
    return raw(Kind::Constant, {}, value);
}

ExprNode ExprNode::variable(std::string name) {
    if (!is_variable_name(name)) throw StructuralError("invalid variable name '" + name + "'");
    return raw(Kind::Variable, {}, 0.0, std::move(name));
}

ExprNode ExprNode::derivative(std::string name) {
    if (!is_derivative_name(name)) throw StructuralError("invalid derivative symbol '" + name + "'");
    return raw(Kind::Derivative, {}, 0.0, std::move(name));
}

ExprNode ExprNode::unary(Kind kind, ExprNode child) {
    if (arity(kind) != 1) throw StructuralError("kind is not a unary operator");
    std::vector<ExprNode> ch;
    ch.push_back(std::move(child));
    return raw(kind, std::move(ch));
}

ExprNode ExprNode::binary(Kind kind, ExprNode lhs, ExprNode rhs) {
    if (arity(kind) != 2) throw StructuralError("kind is not a binary operator");
    std::vector<ExprNode> ch;
    ch.reserve(2);
    ch.push_back(std::move(lhs));
    ch.push_back(std::move(rhs));
    return raw(kind, std::move(ch));
}

std::size_t ExprNode::node_count() const {
    std::size_t n = 1;
    for (const auto& ch : children_) n += ch.node_count();
    return n;
}

std::size_t ExprNode::constant_count() const {
    std::size_t n = kind_ == Kind::Constant ? 1 : 0;
    for (const auto& ch : children_) n += ch.constant_count();
    return n;
}

std::size_t ExprNode::depth() const {
    std::size_t d = 0;
    for (const auto& ch : children_) d = std::max(d, ch.depth());
    return d + 1;
}

void ExprNode::validate() const {
    if (static_cast<int>(children_.size()) != arity(kind_)) {
        throw StructuralError("node has " + std::to_string(children_.size()) + " children, expected " +
                              std::to_string(arity(kind_)));
    }
    switch (kind_) {
        case Kind::Constant:
            if (!std::isfinite(value_)) throw StructuralError("constant must be finite");
            break;
        case Kind::Variable:
            if (!is_variable_name(name_)) throw StructuralError("invalid variable name '" + name_ + "'");
            break;
        case Kind::Derivative:
            if (!is_derivative_name(name_)) throw StructuralError("invalid derivative symbol '" + name_ + "'");
            break;
        default:
            break;
    }
    for (const auto& ch : children_) ch.validate();
}

bool operator==(const ExprNode& a, const ExprNode& b) {
    if (a.kind_ != b.kind_ || a.children_.size() != b.children_.size()) return false;
    if (a.kind_ == Kind::Constant && a.value_ != b.value_) return false;
    if ((a.kind_ == Kind::Variable || a.kind_ == Kind::Derivative) && a.name_ != b.name_) return false;
    for (std::size_t i = 0; i < a.children_.size(); ++i) {
        if (a.children_[i] != b.children_[i]) return false;
    }
    return true;
}

ExprNode operator+(ExprNode a, ExprNode b) { return ExprNode::binary(Kind::Add, std::move(a), std::move(b)); }
ExprNode operator-(ExprNode a, ExprNode b) { return ExprNode::binary(Kind::Sub, std::move(a), std::move(b)); }
ExprNode operator*(ExprNode a, ExprNode b) { return ExprNode::binary(Kind::Mul, std::move(a), std::move(b)); }
ExprNode operator/(ExprNode a, ExprNode b) { return ExprNode::binary(Kind::Div, std::move(a), std::move(b)); }
ExprNode pow(ExprNode base, ExprNode exponent) {
    return ExprNode::binary(Kind::Pow, std::move(base), std::move(exponent));
}
ExprNode sin(ExprNode a) { return ExprNode::unary(Kind::Sin, std::move(a)); }
ExprNode cos(ExprNode a) { return ExprNode::unary(Kind::Cos, std::move(a)); }
ExprNode exp(ExprNode a) { return ExprNode::unary(Kind::Exp, std::move(a)); }
ExprNode abs(ExprNode a) { return ExprNode::unary(Kind::Abs, std::move(a)); }
ExprNode neg(ExprNode a) { return ExprNode::unary(Kind::Neg, std::move(a)); }
ExprNode c(double value) { return ExprNode::constant(value); }
ExprNode var(std::string name) { return ExprNode::variable(std::move(name)); }
ExprNode d(std::string name) { return ExprNode::derivative(std::move(name)); }

double evaluate(const ExprNode& tree, const Environment& env) {
    const auto& ch = tree.children();
    switch (tree.kind()) {
        case Kind::Constant:
            return tree.value();
        case Kind::Variable:
        case Kind::Derivative: {
            auto it = env.find(tree.name());
            if (it == env.end()) throw DomainError("no value bound for symbol '" + tree.name() + "'");
            return it->second;
        }
        case Kind::Add:
            return evaluate(ch[0], env) + evaluate(ch[1], env);
        case Kind::Sub:
            return evaluate(ch[0], env) - evaluate(ch[1], env);
        case Kind::Mul:
            return evaluate(ch[0], env) * evaluate(ch[1], env);
        case Kind::Div:
            return evaluate(ch[0], env) / evaluate(ch[1], env);
        case Kind::Pow:
            return std::pow(evaluate(ch[0], env), evaluate(ch[1], env));
        case Kind::Sin:
            return std::sin(evaluate(ch[0], env));
        case Kind::Cos:
            return std::cos(evaluate(ch[0], env));
        case Kind::Exp:
            return std::exp(evaluate(ch[0], env));
        case Kind::Abs:
            return std::abs(evaluate(ch[0], env));
        case Kind::Neg:
            return -evaluate(ch[0], env);
    }
    return 0.0;
}

std::string to_infix(const ExprNode& tree) {
    const auto& ch = tree.children();
    std::ostringstream os;
    switch (tree.kind()) {
        case Kind::Constant:
            os << tree.value();
            break;
        case Kind::Variable:
        case Kind::Derivative:
            os << tree.name();
            break;
        case Kind::Add:
            os << '(' << to_infix(ch[0]) << " + " << to_infix(ch[1]) << ')';
            break;
        case Kind::Sub:
            os << '(' << to_infix(ch[0]) << " - " << to_infix(ch[1]) << ')';
            break;
        case Kind::Mul:
            os << to_infix(ch[0]) << '*' << to_infix(ch[1]);
            break;
        case Kind::Div:
            os << to_infix(ch[0]) << '/' << to_infix(ch[1]);
            break;
        case Kind::Pow:
            os << to_infix(ch[0]) << '^' << to_infix(ch[1]);
            break;
        case Kind::Sin:
            os << "sin(" << to_infix(ch[0]) << ')';
            break;
        case Kind::Cos:
            os << "cos(" << to_infix(ch[0]) << ')';
            break;
        case Kind::Exp:
            os << "exp(" << to_infix(ch[0]) << ')';
            break;
        case Kind::Abs:
            os << "abs(" << to_infix(ch[0]) << ')';
            break;
        case Kind::Neg:
            os << "-(" << to_infix(ch[0]) << ')';
            break;
    }
    return os.str();
}

namespace {

void collect_leaves(const ExprNode& n, std::set<std::string>& out) {
    if (n.kind() == Kind::Variable || n.kind() == Kind::Derivative) out.insert(n.name());
    for (const auto& ch : n.children()) collect_leaves(ch, out);
}

}  // namespace

std::vector<std::string> leaf_names(const ExprNode& tree) {
    std::set<std::string> names;
    collect_leaves(tree, names);
    return {names.begin(), names.end()};
}

}  // namespace lemon::expr
