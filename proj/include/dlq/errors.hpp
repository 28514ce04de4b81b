#pragma once

#include <stdexcept>
#include <string>

namespace dlq {

/// Base class of every error raised by the library. `kind()` is the
/// machine-readable tag surfaced by the CLI as `error.kind`.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ParameterError : public Error {
public:
    explicit ParameterError(const std::string& message) : Error("parameter", message) {}
};

class DomainError : public Error {
public:
    explicit DomainError(const std::string& message) : Error("domain", message) {}
};

class StateError : public Error {
public:
    explicit StateError(const std::string& message) : Error("state", message) {}
};

class ParseError : public Error {
public:
    ParseError(const std::string& source, int line, const std::string& message)
        : Error("parse", source + ":" + std::to_string(line) + ": " + message), line_(line) {}

    int line() const noexcept { return line_; }

private:
    int line_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class ConvergenceError : public Error {
public:
    ConvergenceError(int slice, double residual, const std::string& message)
        : Error("convergence", message), slice_(slice), residual_(residual) {}

    int slice() const noexcept { return slice_; }
    double residual() const noexcept { return residual_; }

private:
    int slice_;
    double residual_;
};

class PositivityError : public Error {
public:
    PositivityError(int slice, const std::string& message)
        : Error("positivity", message), slice_(slice) {}

    int slice() const noexcept { return slice_; }

private:
    int slice_;
};

class DegeneracyError : public Error {
public:
    explicit DegeneracyError(const std::string& message) : Error("degeneracy", message) {}
};

class SimulationError : public Error {
public:
    SimulationError(std::size_t path, int step, const std::string& message)
        : Error("simulation", message), path_(path), step_(step) {}

    std::size_t path() const noexcept { return path_; }
    int step() const noexcept { return step_; }

private:
    std::size_t path_;
    int step_;
};

class DegenerateFrontierError : public Error {
public:
    explicit DegenerateFrontierError(const std::string& message)
        : Error("degenerate_frontier", message) {}
};

}  // namespace dlq
