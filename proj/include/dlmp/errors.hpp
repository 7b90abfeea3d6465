#pragma once

#include <stdexcept>
#include <string>

namespace dlmp {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class FeederErrc {
    malformed,
    cycle,
    disconnected,
    duplicate_line,
    nonpositive_impedance,
    invalid_limit,
    unknown_aggregator_node,
};

class FeederError : public Error {
public:
    FeederError(FeederErrc code, const std::string& what);
    FeederErrc code() const noexcept { return code_; }

private:
    FeederErrc code_;
};

// Power-flow sweep did not converge within its budget.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

class VoltageCollapseError : public ConvergenceError {
public:
    using ConvergenceError::ConvergenceError;
};

class SingularModelError : public Error {
public:
    using Error::Error;
};

// Argument outside the domain of a model function (negative consumption,
// nonpositive price, empty fairness mask, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

class NonsmoothPointError : public DomainError {
public:
    using DomainError::DomainError;
};

// Prices became non-finite or nonpositive inside the market loop.
class DivergenceError : public Error {
public:
    using Error::Error;
};

class InfeasibleError : public Error {
public:
    using Error::Error;
};

const char* to_string(FeederErrc code) noexcept;

} // namespace dlmp
