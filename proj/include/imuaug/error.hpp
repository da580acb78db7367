#pragma once

#include <stdexcept>
#include <string>

namespace imuaug {

// Error hierarchy mirrored by the CLI exit codes:
//   ConfigError / InvalidArgument / InsufficientData -> 1
//   DataError                                        -> 2
//   InternalError (broken invariant)                 -> 3
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated call contract (non-unit rotation, bad dimensions, bad flag value).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Unusable configuration: unknown metric ids, missing distribution groups,
// unresolvable references between files.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent on-disk data.
class DataError : public Error {
public:
    using Error::Error;
};

// An estimation group has too few members to fit a distribution.
class InsufficientData : public Error {
public:
    using Error::Error;
};

// A hard invariant failed at runtime (for example a leaking split plan).
class InternalError : public Error {
public:
    using Error::Error;
};

}  // namespace imuaug
