#pragma once

#include <stdexcept>
#include <string>

namespace mulora {

// Precondition violated by the caller (bad index, mismatched dimensions, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Random topology generation could not satisfy the placement constraints.
class GenerationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Quadrature or search did not reach the requested accuracy.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Request exceeds what a routine is willing to do (e.g. exhaustive ML budget).
class CapabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OptimizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mulora
