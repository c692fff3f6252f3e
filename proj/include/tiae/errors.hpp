#pragma once

#include <stdexcept>
#include <string>

namespace tiae {

/// Incompatible tensor shapes or layer widths.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf appeared in a tensor produced by an op.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A descriptor whose l2 norm is too small to divide by.
class DegenerateError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Misuse of the differentiation graph (non-scalar root, bad node ordering).
class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Malformed or truncated file, bad magic number, unreadable path.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration value. The message names the offending field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace tiae
