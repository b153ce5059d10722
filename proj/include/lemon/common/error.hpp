#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lemon {

/// Base class for every error raised by the library. Each subclass maps to
/// one CLI exit code (see lemon::cli).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed expression tree (arity or leaf-name violation).
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Polish-notation sequence that does not parse as exactly one expression.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t token_index)
        : Error(what + " (token " + std::to_string(token_index) + ")"), index_(token_index) {}
    std::size_t token_index() const noexcept { return index_; }

private:
    std::size_t index_;
};

class VocabularyError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

class NormalizationError : public Error {
public:
    using Error::Error;
};

/// Non-finite state or stability failure inside a PDE solver.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Dataset / checkpoint container problems (manifest, blob, version).
class DataError : public Error {
public:
    using Error::Error;
};

/// Shape mismatch in a tensor operation; the message names the op.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Misuse of the autodiff graph (non-scalar loss, repeated backward, ...).
class GraphError : public Error {
public:
    using Error::Error;
};

/// NaN/Inf encountered in training numerics.
class NumericError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Evaluation protocol contract violated (e.g. fine-tune and test q overlap).
class ProtocolError : public Error {
public:
    using Error::Error;
};

}  // namespace lemon
