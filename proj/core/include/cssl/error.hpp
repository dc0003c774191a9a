#pragma once

#include <stdexcept>
#include <string>

namespace cssl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor/field extents do not agree with an operation's contract.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A caller-supplied argument is outside its documented domain.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in a loss, gradient or parameter.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file content; the message carries the byte offset.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Invalid run configuration; key_path() names the offending JSON key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key_path, const std::string& what)
      : Error(key_path.empty() ? what : key_path + ": " + what),
        key_path_(std::move(key_path)) {}

  const std::string& key_path() const noexcept { return key_path_; }

 private:
  std::string key_path_;
};

}  // namespace cssl
