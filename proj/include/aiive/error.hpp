#pragma once

#include <stdexcept>
#include <string>

namespace aiive {

// Bad caller input: sizes, ids, out-of-range values.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Matrix/vector dimensions that do not line up.
class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// NaN/Inf where a finite number is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dataset or file I/O failures.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace aiive
