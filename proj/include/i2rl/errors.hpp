#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace i2rl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model (MDP, feature set, map) violates one of its invariants.
class ModelError : public Error {
public:
    using Error::Error;
};

/// Two objects that must share a dimension do not.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An operation that needs data received none.
class EmptyInputError : public Error {
public:
    using Error::Error;
};

/// Argument outside the documented domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// An iterative method hit its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual, std::size_t iterations)
        : Error(what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    std::size_t iterations() const noexcept { return iterations_; }

private:
    double residual_;
    std::size_t iterations_;
};

/// No completion of a hidden segment is consistent with the dynamics.
class InfeasibleError : public Error {
public:
    InfeasibleError(const std::string& what, std::size_t gap_begin, std::size_t gap_end)
        : Error(what), gap_begin_(gap_begin), gap_end_(gap_end) {}

    std::size_t gap_begin() const noexcept { return gap_begin_; }
    std::size_t gap_end() const noexcept { return gap_end_; }

private:
    std::size_t gap_begin_;
    std::size_t gap_end_;
};

/// A hidden gap exceeds the enumeration cap; the caller should sample instead.
class GapTooLongError : public Error {
public:
    GapTooLongError(const std::string& what, std::size_t length, std::size_t cap)
        : Error(what), length_(length), cap_(cap) {}

    std::size_t length() const noexcept { return length_; }
    std::size_t cap() const noexcept { return cap_; }

private:
    std::size_t length_;
    std::size_t cap_;
};

/// Malformed configuration text. `line()` is 1-based, 0 when not tied to a line.
class ConfigError : public Error {
public:
    ConfigError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Malformed data file, such as a trajectory file. `line()` is 1-based.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace i2rl
