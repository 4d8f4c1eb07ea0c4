#pragma once

#include <stdexcept>
#include <string>

namespace revid {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad configuration value; message names the offending field.
struct ConfigError : Error { using Error::Error; };
// Tensor/image dimensions do not match what the operation expects.
struct ShapeError : Error { using Error::Error; };
// Timestep or frame index outside its valid range.
struct IndexError : Error { using Error::Error; };
// Invalid runtime input (empty clip, frame too small, ...).
struct InputError : Error { using Error::Error; };
// Filesystem or serialization failure; message carries the path.
struct IoError : Error { using Error::Error; };
// Non-finite values or a numeric routine that failed to converge.
struct NumericalError : Error { using Error::Error; };

} // namespace revid
