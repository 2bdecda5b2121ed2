#pragma once

#include <stdexcept>
#include <string>

namespace uw1 {

// Malformed files, bad arguments, shape mismatches.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Iterative kernels that failed to converge or produced NaN.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// The requested discrepancy is +infinity for the given masses.
class DivergentProblem : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace uw1
