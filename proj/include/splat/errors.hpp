#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splat {

/// Malformed file contents. Carries the byte offset where parsing stopped.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& msg, std::size_t byte_offset)
      : std::runtime_error(msg + " (at byte " + std::to_string(byte_offset) + ")"),
        byte_offset_(byte_offset) {}

  std::size_t byte_offset() const { return byte_offset_; }

private:
  std::size_t byte_offset_;
};

/// File is well-formed but its schema/version does not match what the caller expects.
class VersionError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Dataset loading failure; message names the offending frame.
class LoadError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A loss term became non-finite during optimization; message names the term.
class TrainingDivergence : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace splat
