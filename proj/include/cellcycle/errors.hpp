#pragma once

#include <stdexcept>
#include <string>

namespace cellcycle {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model function returned NaN or infinity.
class NonFiniteEvaluation : public Error {
public:
    using Error::Error;
};

/// Domain of the model is malformed (e.g. mMax <= mP).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Malformed model file.
class ParseError : public Error {
public:
    using Error::Error;
};

/// A backward flow left the state space before the requested time.
class DomainExit : public Error {
public:
    using Error::Error;
};

/// An argument lies outside the numerically represented range.
/// Samplers use it to signal that a trajectory escapes [0, mMax].
class RangeError : public Error {
public:
    using Error::Error;
};

class CflViolation : public Error {
public:
    using Error::Error;
};

class NegativeDensity : public Error {
public:
    using Error::Error;
};

class EmptySample : public Error {
public:
    using Error::Error;
};

} // namespace cellcycle
