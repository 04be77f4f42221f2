#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace bsvie {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Expression text rejected by the parser. Carries the byte offset of the
/// offending token and a description of what would have been accepted there.
class ParseError : public Error {
public:
    ParseError(std::size_t offset, std::string expected, const std::string& what)
        : Error(what), offset_(offset), expected_(std::move(expected)) {}

    std::size_t offset() const { return offset_; }
    const std::string& expected() const { return expected_; }

private:
    std::size_t offset_;
    std::string expected_;
};

/// Identifier that is neither a known variable nor a function.
class UnknownVariableError : public ParseError {
public:
    UnknownVariableError(std::size_t offset, std::string name, const std::string& what)
        : ParseError(offset, "known variable or function", what), name_(std::move(name)) {}

    const std::string& name() const { return name_; }

private:
    std::string name_;
};

/// A free variable had no binding at evaluation time.
class UnboundVariableError : public Error {
public:
    explicit UnboundVariableError(std::string name)
        : Error("unbound variable '" + name + "'"), name_(std::move(name)) {}

    const std::string& name() const { return name_; }

private:
    std::string name_;
};

/// Guarded arithmetic left its domain: division by zero, log of a
/// non-positive value, sqrt of a negative, or a non-finite result.
class DomainError : public Error {
public:
    using Error::Error;
};

/// A model function (drift, volatility, weight, coefficient) failed to
/// evaluate at a sampled point; the message names the point.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Regression design matrix too close to singular to trust.
class IllConditionedBasisError : public Error {
public:
    IllConditionedBasisError(double condition, const std::string& what)
        : Error(what), condition_(condition) {}

    double condition() const { return condition_; }

private:
    double condition_;
};

/// A resource cap would be exceeded (series order, tree size, ...).
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Picard iteration failed to contract within the allowed iterations.
class DivergenceError : public Error {
public:
    DivergenceError(std::vector<double> history, const std::string& what)
        : Error(what), history_(std::move(history)) {}

    /// Successive-iterate L2 distances, oldest first.
    const std::vector<double>& history() const { return history_; }

private:
    std::vector<double> history_;
};

/// Scenario configuration rejected; lists every violation found, not just
/// the first.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> violations)
        : Error(join(violations)), violations_(std::move(violations)) {}

    const std::vector<std::string>& violations() const { return violations_; }

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out = "configuration invalid:";
        for (const auto& s : v) {
            out += "\n  - " + s;
        }
        return out;
    }

    std::vector<std::string> violations_;
};

} // namespace bsvie
