#pragma once

#include <stdexcept>
#include <string>

namespace wolb {

/// Biological parameters violate the ordering or threshold assumptions.
struct InvalidParams : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// An argument falls outside the domain of a rate function or inverse.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

/// A numerical procedure could not produce a result (bracketing, line search, ...).
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Malformed experiment configuration or input file.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace wolb
