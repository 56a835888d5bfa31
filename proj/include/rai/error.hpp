#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rai {

// Root of every error raised by the library. The CLI maps the subclasses
// below onto exit codes, so new failure modes should derive from the most
// specific one that applies.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid argument value (nonpositive alpha, empty sample, bad level, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Outcome variant or dimension does not fit the requested operation.
class TypeError : public Error {
public:
    using Error::Error;
};

// Operation is not defined for this loss or rectifier family.
class CapabilityError : public Error {
public:
    using Error::Error;
};

// Malformed input file. `line` is 1-based; 0 means the whole file.
class IngestionError : public Error {
public:
    IngestionError(const std::string& what, std::size_t line)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class RankDeficiencyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double gradient_norm)
        : NumericalError(what + " (final gradient norm " + std::to_string(gradient_norm) + ")"),
          gradient_norm_(gradient_norm) {}

    double gradient_norm() const noexcept { return gradient_norm_; }

private:
    double gradient_norm_;
};

// Raised by the posterior engine when too many draws fail.
class DrawFailureError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace rai
