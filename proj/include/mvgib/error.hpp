#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mvgib {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised while reading a dataset from disk.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. `key()` names the offending key or flag.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace mvgib
