#pragma once

#include <stdexcept>
#include <string>

namespace surrogate {

/// Bad input: violated precondition, malformed file, missing upstream stage.
/// The CLI maps this to exit code 1.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failure while doing the work (unreachable OD pair, non-finite loss, I/O).
/// The CLI maps this to exit code 2.
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class LoadError : public RuntimeFailure {
public:
    using RuntimeFailure::RuntimeFailure;
};

}  // namespace surrogate
