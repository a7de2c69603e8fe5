#pragma once

#include <stdexcept>
#include <string>

namespace fracross {

/// Mode or species index outside the valid range.
class IndexError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Input outside the domain of an operator (non-zero mean for a negative
/// power, negative time, non-symmetric matrix, ...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Rejected configuration or coupling data.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failure of the time integration itself.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BlowupError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class PositivityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace fracross
