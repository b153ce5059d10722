#include "lemon/exprtree/polish.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lemon/common/error.hpp"

namespace lemon::expr {

namespace {

constexpr std::array<Kind, 10> kOperatorKinds = {Kind::Add, Kind::Sub, Kind::Mul, Kind::Div, Kind::Pow,
                                                 Kind::Sin, Kind::Cos, Kind::Exp, Kind::Abs, Kind::Neg};

const std::vector<std::string>& operator_table() {
    static const std::vector<std::string> table = {"+", "-", "mul", "div", "pow", "sin", "cos", "exp", "abs", "neg"};
    return table;
}

// 10^k for 0 <= k <= 22, exact in binary64.
double pow10_exact(int k) {
    double p = 1.0;
    for (int i = 0; i < k; ++i) p *= 10.0;
    return p;
}

// a * 10^k with a single correctly rounded operation.
double scale10(double a, int k) { return k >= 0 ? a * pow10_exact(k) : a / pow10_exact(-k); }

std::string mantissa_token(int mantissa, int digits) {
    std::string s = std::to_string(mantissa);
    if (static_cast<int>(s.size()) < digits) s.insert(0, static_cast<std::size_t>(digits) - s.size(), '0');
    return s;
}

std::string exponent_token(int e) { return "E" + std::to_string(e); }

bool parse_int(const std::string& s, int& out) {
    if (s.empty()) return false;
    std::size_t i = (s[0] == '-') ? 1 : 0;
    if (i == s.size()) return false;
    long v = 0;
    for (; i < s.size(); ++i) {
        if (s[i] < '0' || s[i] > '9') return false;
        v = v * 10 + (s[i] - '0');
        if (v > 1000000) return false;
    }
    out = static_cast<int>(s[0] == '-' ? -v : v);
    return true;
}

void emit(const ExprNode& n, const ConstantCodec& codec, std::vector<std::string>& out) {
    if (static_cast<int>(n.children().size()) != arity(n.kind())) {
        throw StructuralError("malformed tree: '" + (is_leaf(n.kind()) ? std::string("leaf") : operator_token(n.kind())) +
                              "' has " + std::to_string(n.children().size()) + " children, expected " +
                              std::to_string(arity(n.kind())));
    }
    switch (n.kind()) {
        case Kind::Constant: {
            const ConstantCode code = encode_constant(n.value(), codec);
            out.push_back(code.negative ? "c-" : "c+");
            out.push_back(mantissa_token(code.mantissa, codec.digits));
            out.push_back(exponent_token(code.exponent));
            return;
        }
        case Kind::Variable:
            if (!is_variable_name(n.name())) throw StructuralError("invalid variable name '" + n.name() + "'");
            out.push_back(n.name());
            return;
        case Kind::Derivative:
            if (!is_derivative_name(n.name())) throw StructuralError("invalid derivative symbol '" + n.name() + "'");
            out.push_back(n.name());
            return;
        default:
            out.push_back(operator_token(n.kind()));
            for (const auto& ch : n.children()) emit(ch, codec, out);
            return;
    }
}

// One lexical item of a Polish sequence: an operator, a leaf, or a whole constant triple.
struct Item {
    Kind kind;
    std::size_t index;  // position of the first token
    double value = 0.0;
    std::string name;
};

}  // namespace

std::string to_text(const SymbolSequence& seq) {
    std::string s;
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
        if (i) s += ' ';
        s += seq.tokens[i];
    }
    return s;
}

SymbolSequence from_text(const std::string& text) {
    SymbolSequence seq;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) seq.tokens.push_back(tok);
    return seq;
}

ConstantCode encode_constant(double value, const ConstantCodec& codec) {
    if (!std::isfinite(value)) throw DomainError("cannot encode non-finite constant");
    ConstantCode code;
    code.negative = std::signbit(value) && value != 0.0;
    const double a = std::abs(value);
    if (a == 0.0) return code;
    const int lo = static_cast<int>(pow10_exact(codec.digits - 1));
    const int hi = static_cast<int>(pow10_exact(codec.digits));
    int e = static_cast<int>(std::floor(std::log10(a)));
    for (int guard = 0; guard < 4; ++guard) {
        const long long m = std::llround(scale10(a, codec.digits - 1 - e));
        if (m >= hi) {
            ++e;
        } else if (m < lo) {
            --e;
        } else {
            code.mantissa = static_cast<int>(m);
            break;
        }
    }
    if (code.mantissa == 0) throw DomainError("constant encoding did not converge");
    if (e < codec.min_exponent || e > codec.max_exponent) {
        std::ostringstream os;
        os << "constant " << value << " has exponent " << e << " outside [" << codec.min_exponent << ", "
           << codec.max_exponent << "]";
        throw DomainError(os.str());
    }
    code.exponent = e;
    return code;
}

double decode_constant(const ConstantCode& code, const ConstantCodec& codec) {
    const double mag = scale10(static_cast<double>(code.mantissa), code.exponent - (codec.digits - 1));
    return code.negative ? -mag : mag;
}

double quantize(double value, const ConstantCodec& codec) {
    return decode_constant(encode_constant(value, codec), codec);
}

const std::string& operator_token(Kind kind) {
    for (std::size_t i = 0; i < kOperatorKinds.size(); ++i) {
        if (kOperatorKinds[i] == kind) return operator_table()[i];
    }
    throw StructuralError("leaf kinds have no operator token");
}

const std::vector<std::string>& operator_tokens() { return operator_table(); }

SymbolSequence to_polish(const ExprNode& tree, const ConstantCodec& codec) {
    SymbolSequence seq;
    emit(tree, codec, seq.tokens);
    return seq;
}

ExprNode from_polish(const SymbolSequence& seq, const ConstantCodec& codec) {
    const auto& toks = seq.tokens;
    if (toks.empty()) throw ParseError("empty symbol sequence", 0);

    // Lex: group constant triples, classify every other token.
    std::vector<Item> items;
    for (std::size_t i = 0; i < toks.size();) {
        const std::string& t = toks[i];
        if (t == "c+" || t == "c-") {
            if (i + 2 >= toks.size()) throw ParseError("truncated constant", toks.size());
            const std::string& mt = toks[i + 1];
            const std::string& et = toks[i + 2];
            int m = 0;
            int e = 0;
            const int hi = static_cast<int>(pow10_exact(codec.digits));
            const int lo = static_cast<int>(pow10_exact(codec.digits - 1));
            if (static_cast<int>(mt.size()) != codec.digits || mt[0] == '-' || !parse_int(mt, m) || m >= hi ||
                (m != 0 && m < lo)) {
                throw ParseError("bad mantissa token '" + mt + "'", i + 1);
            }
            if (et.size() < 2 || et[0] != 'E' || !parse_int(et.substr(1), e) || e < codec.min_exponent ||
                e > codec.max_exponent) {
                throw ParseError("bad exponent token '" + et + "'", i + 2);
            }
            ConstantCode code{t == "c-", m, e};
            items.push_back({Kind::Constant, i, decode_constant(code, codec), {}});
            i += 3;
            continue;
        }
        bool matched = false;
        for (std::size_t k = 0; k < kOperatorKinds.size(); ++k) {
            if (operator_table()[k] == t) {
                items.push_back({kOperatorKinds[k], i, 0.0, {}});
                matched = true;
                break;
            }
        }
        if (!matched) {
            if (is_derivative_name(t)) {
                items.push_back({Kind::Derivative, i, 0.0, t});
            } else if (is_variable_name(t)) {
                items.push_back({Kind::Variable, i, 0.0, t});
            } else {
                throw ParseError("unknown symbol '" + t + "'", i);
            }
        }
        ++i;
    }

    // Prefix expressions evaluate right to left with an operand stack.
    std::vector<ExprNode> stack;
    for (auto it = items.rbegin(); it != items.rend(); ++it) {
        const int n = arity(it->kind);
        if (n == 0) {
            stack.push_back(ExprNode::raw(it->kind, {}, it->value, it->name));
            continue;
        }
        if (static_cast<int>(stack.size()) < n) {
            throw ParseError("operator '" + toks[it->index] + "' is missing an operand", it->index);
        }
        std::vector<ExprNode> children;
        for (int k = 0; k < n; ++k) {
            children.push_back(std::move(stack.back()));
            stack.pop_back();
        }
        stack.push_back(ExprNode::raw(it->kind, std::move(children)));
    }
    if (stack.size() != 1) {
        // The first complete expression ends where the leftover begins.
        std::size_t need = 1;
        std::size_t pos = 0;
        for (; pos < items.size() && need > 0; ++pos) need = need - 1 + static_cast<std::size_t>(arity(items[pos].kind));
        const std::size_t at = pos < items.size() ? items[pos].index : toks.size();
        throw ParseError("leftover tokens after a complete expression", at);
    }
    return std::move(stack.back());
}

ExprNode quantize_constants(const ExprNode& tree, const ConstantCodec& codec) {
    if (tree.kind() == Kind::Constant) return ExprNode::raw(Kind::Constant, {}, quantize(tree.value(), codec));
    std::vector<ExprNode> children;
    children.reserve(tree.children().size());
    for (const auto& ch : tree.children()) children.push_back(quantize_constants(ch, codec));
    return ExprNode::raw(tree.kind(), std::move(children), tree.value(), tree.name());
}

}  // namespace lemon::expr
