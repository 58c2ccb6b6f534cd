#pragma once

#include <stdexcept>
#include <string>

namespace avsr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes, scales or frame sizes that violate an operation's contract.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Inconsistent model / training / run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint or kernel-bank file that is truncated or fails its checksum.
class CorruptBlob : public Error {
 public:
  using Error::Error;
};

/// File format version this build cannot read.
class VersionMismatch : public Error {
 public:
  using Error::Error;
};

/// A checkpoint whose stored configuration disagrees with the requested one.
class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

/// Training stopped because the loss or gradients became non-finite.
class TrainingAborted : public Error {
 public:
  using Error::Error;
};

[[noreturn]] void throw_invalid(const std::string& what);

inline void require(bool condition, const std::string& what) {
  if (!condition) throw_invalid(what);
}

}  // namespace avsr
