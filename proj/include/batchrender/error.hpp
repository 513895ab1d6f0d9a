#pragma once

#include <stdexcept>
#include <string>

namespace batchrender {

// Base for every error raised by the library. Messages are meant to be
// surfaced verbatim to scripting-side callers.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid argument values: non-finite numbers, out-of-range parameters.
class ValueError : public Error {
 public:
  using Error::Error;
};

// Tensor shape or element-count mismatch.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Tile layout cannot be realised (atlas too large, bad scene index).
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Requested hardware feature is not present on this machine.
class BackendUnavailable : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace batchrender
