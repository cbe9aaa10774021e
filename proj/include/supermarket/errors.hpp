#pragma once

#include <stdexcept>
#include <string>

namespace supermarket {

// Base class for everything thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A model descriptor violates one of its invariants (negative rate, bad row
// sum, probability vector not summing to one, ...).
class ValidationError : public Error {
public:
    using Error::Error;
};

// Structural defects: reducible generator, dimension mismatch.
class StructuralError : public Error {
public:
    using Error::Error;
};

// Numerical failure: singular matrix, residual beyond tolerance.
class NumericError : public Error {
public:
    using Error::Error;
};

// rho = lambda/mu >= 1.
class StabilityError : public Error {
public:
    using Error::Error;
};

// Invalid argument outside its mathematical domain (e.g. root of a negative).
class DomainError : public Error {
public:
    using Error::Error;
};

// Bad experiment configuration (unknown experiment, missing field, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Lyapunov ratio denominators vanish at the supplied state.
class DegenerateStateError : public Error {
public:
    using Error::Error;
};

// Decay-rate fit has no usable window.
class FitError : public Error {
public:
    using Error::Error;
};

// ODE trajectory left the admissible region.
class IntegrationError : public Error {
public:
    using Error::Error;
};

}  // namespace supermarket
