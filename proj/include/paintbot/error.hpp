#pragma once

#include <stdexcept>
#include <string>

namespace paintbot {

// Precondition violations on caller-supplied values (shapes, ranges, sizes).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or incompatible files: checkpoints, dataset archives, PNGs, configs.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File system failures, always carrying the offending path.
class IoError : public std::runtime_error {
 public:
  IoError(const std::string& what, const std::string& path)
      : std::runtime_error(what + ": " + path), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace paintbot
