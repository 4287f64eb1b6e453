#pragma once

#include <stdexcept>
#include <string>

namespace voltkernel {

enum class ErrorKind {
    invalid_argument,
    dimension,
    parse,
    topology,
    io,
    solver,
    config,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct InvalidArgument : Error {
    explicit InvalidArgument(const std::string& what) : Error(ErrorKind::invalid_argument, what) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& what) : Error(ErrorKind::dimension, what) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& what) : Error(ErrorKind::parse, what) {}
};

struct TopologyError : Error {
    explicit TopologyError(const std::string& what) : Error(ErrorKind::topology, what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

// Raised when a training or dispatch solve does not certify optimality.
struct SolverError : Error {
    SolverError(const std::string& what, double primal_res, double dual_res, double gap)
        : Error(ErrorKind::solver, what), primal_res(primal_res), dual_res(dual_res), gap(gap) {}

    double primal_res;
    double dual_res;
    double gap;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace voltkernel
