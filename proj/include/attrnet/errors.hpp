#pragma once

#include <stdexcept>
#include <string>

namespace attrnet {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf in activations, losses or gradients.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid class label or one-hot row.
class LabelError : public Error {
 public:
  using Error::Error;
};

/// A declarative object (spec, config, bbox, schema) failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// No records carry the requested attribute.
class CoverageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Image or dataset file could not be read or decoded.
class IngestError : public Error {
 public:
  IngestError(std::string path, const std::string& what)
      : Error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A file could not be written.
class WriteError : public Error {
 public:
  WriteError(std::string path, const std::string& what)
      : Error(what + ": " + path), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// Bad configuration document or flag combination.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace attrnet
