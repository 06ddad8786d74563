#pragma once

#include <stdexcept>
#include <string>

namespace tlr {

/// Input that violates a documented contract (bad corpus, malformed file,
/// inconsistent shapes). The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while executing an otherwise valid request (I/O, divergence,
/// endpoint failure). The CLI maps this to exit code 2.
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tlr
