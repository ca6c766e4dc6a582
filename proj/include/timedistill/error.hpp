#pragma once

#include <stdexcept>
#include <string>

namespace timedistill {

/// Malformed or inconsistent input data (CSV, artifacts, checkpoints).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed arguments that violate an operation's precondition.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A numerical contract (gradient tolerance, theorem margin, finiteness) was violated.
class ContractViolation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace timedistill
