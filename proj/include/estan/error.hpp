#pragma once

#include <stdexcept>
#include <string>

namespace estan {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor dimension/shape violations (zero dims, mismatched operands, bad kernels).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid argument values: bad config keys, out-of-range settings, n < k folds.
class ValueError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents (PNG, manifest, checkpoint).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Filesystem failures; message carries the offending path.
class IoError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finiteness is required (diverged loss, NaN activations).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Name lookups that found nothing (unknown layer, missing parameter).
class LookupError : public Error {
public:
    using Error::Error;
};

}  // namespace estan
