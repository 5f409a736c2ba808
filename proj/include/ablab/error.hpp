#pragma once

#include <stdexcept>
#include <string>

namespace ablab {

// Shape mismatch between tensors, or an operation applied to the wrong rank.
class ShapeError : public std::runtime_error {
  public:
    explicit ShapeError(const std::string &msg) : std::runtime_error("shape error: " + msg) {}
};

// Non-finite values, degenerate matrices, failed convergence.
class NumericError : public std::runtime_error {
  public:
    explicit NumericError(const std::string &msg) : std::runtime_error("numeric error: " + msg) {}
};

// Invalid run configuration (bad JSON, infeasible world/group split, ...).
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string &msg) : std::runtime_error("config error: " + msg) {}
};

// Cross-rank divergence detected at a collective. Indicates a training-state
// bug, not a user error.
class ProtocolError : public std::runtime_error {
  public:
    explicit ProtocolError(const std::string &msg) : std::runtime_error("protocol error: " + msg) {}
};

class IoError : public std::runtime_error {
  public:
    explicit IoError(const std::string &msg) : std::runtime_error("i/o error: " + msg) {}
};

} // namespace ablab
