#pragma once

#include <stdexcept>

namespace posebench {

// Library error hierarchy.
//
// UserError covers everything caused by bad input (config files, CLI
// arguments, dataset/checkpoint files, impossible requests); the CLI maps it
// to exit code 2. Plain Error subclasses are internal/numeric failures and
// exit 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UserError : public Error {
public:
    using Error::Error;
};

// --- internal / numeric -------------------------------------------------

// matrix_to_euler hit |elevation| within 1e-6 of pi/2; azimuth/inplane are
// no longer separable.
class GimbalLockError : public Error {
public:
    using Error::Error;
};

// NaN/Inf reached a function that requires finite input (wrap_angle, ...).
class NonFiniteError : public Error {
public:
    using Error::Error;
};

// Contrastive denominator has no support (all weights zero) or underflowed.
class DegenerateDenominatorError : public Error {
public:
    using Error::Error;
};

// Loss turned NaN/Inf during training; message carries step diagnostics.
class NonFiniteLossError : public Error {
public:
    using Error::Error;
};

// A parameter gradient turned NaN/Inf before an optimizer step.
class NonFiniteGradientError : public Error {
public:
    using Error::Error;
};

// --- user input ---------------------------------------------------------

class ConfigError : public UserError {
public:
    using UserError::UserError;
};

// Tensor/checkpoint dimensions disagree with the requested architecture.
class ShapeMismatchError : public UserError {
public:
    using UserError::UserError;
};

class IoError : public UserError {
public:
    using UserError::UserError;
};

// File exists but its bytes do not parse (bad magic, bad JSON, truncation).
class FormatError : public UserError {
public:
    using UserError::UserError;
};

// seen/unseen class lists overlap, reference unknown ids, or leave no
// seen class.
class InvalidSplitError : public UserError {
public:
    using UserError::UserError;
};

class BadClassIdError : public UserError {
public:
    using UserError::UserError;
};

class DatasetTooSmallError : public UserError {
public:
    using UserError::UserError;
};

class NotEnoughShotsError : public UserError {
public:
    using UserError::UserError;
};

class EmptySplitError : public UserError {
public:
    using UserError::UserError;
};

class UnknownParameterError : public UserError {
public:
    using UserError::UserError;
};

} // namespace posebench
