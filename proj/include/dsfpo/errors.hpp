#pragma once
#include <stdexcept>
#include <string>

namespace dsfpo {

// Shape or rank violation in a tensor op; message names the failing node.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Tape misuse (backward before forward, invalid handle, ...).
class TapeError : public std::runtime_error {
 public:
  explicit TapeError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite value where a finite one is required; carries the offender's name.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

 private:
  std::string where_;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint I/O failures, split by kind so callers can distinguish them.
enum class CheckpointErrorKind { corrupt, version_mismatch, shape_mismatch, config_mismatch, io };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

}  // namespace dsfpo
