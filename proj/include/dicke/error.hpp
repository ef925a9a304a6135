#pragma once

#include <stdexcept>
#include <string>

namespace dicke {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Inputs that violate a documented invariant (bad config, inconsistent
/// derived parameters, empty trajectories).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The bound-luminosity solution does not exist for these inputs
/// (epsilon = 0, rest at a pole, separatrix period, off the sphere).
class DegenerateError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A numerical procedure could not finish (step underflow, sampling cap).
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dicke
