#pragma once

#include <stdexcept>
#include <string>

namespace matsim {

// Bad input: malformed files, inconsistent dimensions, violated preconditions.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Failure while computing: divergence, non-finite values, exhausted retries.
class ComputeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace matsim
