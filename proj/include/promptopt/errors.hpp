#pragma once

#include <stdexcept>
#include <string>

namespace popt {

/// Base class for all errors raised by this library.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid or inconsistent configuration (CLI exit code 2).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

/// Dataset files that are missing, malformed, or self-inconsistent.
struct DataError : Error {
  explicit DataError(const std::string& msg) : Error(msg) {}
};

/// Model backend failures: auth, exhausted retries, unparseable replies (exit code 3).
struct BackendError : Error {
  explicit BackendError(const std::string& msg) : Error(msg) {}
};

/// Checkpoint load/save failures: bad version, checksum mismatch (exit code 4).
struct CheckpointError : Error {
  explicit CheckpointError(const std::string& msg) : Error(msg) {}
};

/// Raised by arm selection when every live arm has been eliminated.
struct NoLiveArms : Error {
  explicit NoLiveArms(const std::string& msg) : Error(msg) {}
};

}  // namespace popt
