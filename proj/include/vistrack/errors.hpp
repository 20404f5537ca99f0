#pragma once

#include <stdexcept>
#include <string>

namespace vistrack {

// Bad user input: malformed specs, configs, files. CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Broken contract between components (shape mismatches, degenerate boxes).
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or corrupt on-disk artifacts (checkpoints, annotations, masks).
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace vistrack
