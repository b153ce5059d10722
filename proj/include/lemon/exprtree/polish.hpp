#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lemon/exprtree/expr.hpp"

namespace lemon::expr {

/// Operator encoding of one concrete PDE operator: prefix-order tokens.
///
/// A constant occupies three tokens: sign (`c+` / `c-`), a mantissa of
/// `digits` decimal digits read as d.dd..., and a base-10 exponent `E<k>`.
/// 1.5 encodes as `c+ 150 E0`, -0.003 as `c- 300 E-3`, zero as `c+ 000 E0`.
struct SymbolSequence {
    std::vector<std::string> tokens;

    std::size_t size() const noexcept { return tokens.size(); }
    bool empty() const noexcept { return tokens.empty(); }

    friend bool operator==(const SymbolSequence&, const SymbolSequence&) = default;
};

/// Text form: tokens separated by single spaces, no trailing newline.
std::string to_text(const SymbolSequence& seq);
/// Splits on any whitespace.
SymbolSequence from_text(const std::string& text);

struct ConstantCodec {
    int digits = 3;
    int min_exponent = -10;
    int max_exponent = 10;
};

struct ConstantCode {
    bool negative = false;
    int mantissa = 0;  // 0, or in [10^(digits-1), 10^digits)
    int exponent = 0;

    friend bool operator==(const ConstantCode&, const ConstantCode&) = default;
};

/// Rounds to `digits` significant digits. Throws DomainError for non-finite
/// values or exponents outside [min_exponent, max_exponent].
ConstantCode encode_constant(double value, const ConstantCodec& codec = {});
double decode_constant(const ConstantCode& code, const ConstantCodec& codec = {});
/// decode(encode(value)); idempotent.
double quantize(double value, const ConstantCodec& codec = {});

/// Token spelling of an operator kind ("+", "-", "mul", "div", "pow", "sin", ...).
const std::string& operator_token(Kind kind);
/// All operator tokens in a fixed order.
const std::vector<std::string>& operator_tokens();

/// Preorder traversal; throws StructuralError if the tree is malformed.
SymbolSequence to_polish(const ExprNode& tree, const ConstantCodec& codec = {});

/// Inverse of to_polish. Throws ParseError (with token index) when the
/// sequence is not exactly one prefix expression.
ExprNode from_polish(const SymbolSequence& seq, const ConstantCodec& codec = {});

/// Tree with every constant replaced by quantize(constant).
ExprNode quantize_constants(const ExprNode& tree, const ConstantCodec& codec = {});

}  // namespace lemon::expr
