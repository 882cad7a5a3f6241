#pragma once

#include <stdexcept>
#include <string>

namespace uvsn {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Domain invariant violated (bad shapes, non-finite values, empty masks, ...).
struct ValidationError : Error {
  using Error::Error;
};

// On-disk format violated (bad magic, version mismatch, truncation, ...).
struct FormatError : Error {
  using Error::Error;
};

// Filesystem-level failure.
struct IoError : Error {
  using Error::Error;
};

// Bad configuration or command-line usage. The CLI maps this to exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace uvsn
