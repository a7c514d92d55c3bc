#pragma once

#include <stdexcept>
#include <string>

namespace tcm {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A parameter violates the documented domain of an operation.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An operation was called in a state its contract forbids
/// (e.g. stepping a trajectory that is already flagged diverged).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Requested system is larger than a solver supports.
class UnsupportedSize : public Error {
public:
    using Error::Error;
};

/// Fock-space cutoff too small to represent the initial state.
class CutoffOverflow : public Error {
public:
    CutoffOverflow(const std::string& what, int required)
        : Error(what), required_cutoff(required) {}
    int required_cutoff;
};

/// Not enough data to fit a singularity exponent.
class FitUnavailable : public Error {
public:
    using Error::Error;
};

} // namespace tcm
