#pragma once

#include <stdexcept>
#include <string>

namespace pnradar {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Caller supplied redundant numerology fields that disagree.
struct InconsistentNumerology : Error {
    using Error::Error;
};

/// Dense materialization guard exceeded.
struct TooLarge : Error {
    using Error::Error;
};

/// Covariance factorization failed even after the jitter ladder.
struct CholeskyFailure : Error {
    using Error::Error;
};

/// Principal delay estimate outside [0, T).
struct PrincipalOutOfRange : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace pnradar
