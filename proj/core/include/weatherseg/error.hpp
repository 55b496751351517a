#pragma once

#include <stdexcept>
#include <string>

namespace weatherseg {

// Base of every error the library throws on purpose. Callers that need an
// exit code map the concrete subclass (see tools/).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller: bad dimensions, out-of-range values.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Configuration problem. `key()` names the dotted path of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error("config key '" + key + "': " + what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

// On-disk data is missing, corrupt or inconsistent. `sample()` names the
// sample id when the problem is local to one sample (empty otherwise).
class DataError : public Error {
 public:
  DataError(std::string sample, const std::string& what)
      : Error(sample.empty() ? what : "sample '" + sample + "': " + what),
        sample_(std::move(sample)) {}
  const std::string& sample() const noexcept { return sample_; }

 private:
  std::string sample_;
};

// Non-finite loss or another numerical breakdown during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// mIoU requested from an accumulator with no populated class.
class UndefinedResult : public Error {
 public:
  using Error::Error;
};

}  // namespace weatherseg
