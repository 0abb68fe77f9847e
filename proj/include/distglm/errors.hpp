#pragma once

#include <stdexcept>
#include <string>

namespace distglm {

// Raised when input shapes or values violate a precondition (mismatched
// dimensions, responses outside the family domain, bad option values, ...).
class InvalidInputError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Raised when a likelihood term cannot be evaluated at a finite value.
// Carries the index of the offending case so data problems are traceable.
class NonFiniteObjectiveError : public std::runtime_error {
public:
    NonFiniteObjectiveError(long case_index, const std::string& what)
        : std::runtime_error(what), case_index_(case_index) {}

    long case_index() const noexcept { return case_index_; }

private:
    long case_index_;
};

// Raised when a matrix factorization or decomposition fails (non-positive
// definite system, singular correction matrix, SVD non-convergence, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when backtracking line search exhausts its halving budget without
// finding sufficient decrease.
class StagnationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when solver iterates grow without bound, indicating an objective
// that has no finite minimizer under the current configuration.
class CoercivityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised when a text input (CSV cell, constraint clause, option value)
// cannot be parsed.
class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace distglm
