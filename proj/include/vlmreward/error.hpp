#pragma once

#include <stdexcept>
#include <string>

namespace vlmreward {

// Thrown when a caller violates an operation's precondition (shape mismatch,
// wrong answer format, missing prompt slot, ...).
class ContractError : public std::invalid_argument {
 public:
  explicit ContractError(const std::string& what) : std::invalid_argument(what) {}
};

// Malformed input data: bad JSON-lines records, capture manifests, images.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values in a numeric pipeline (attention logits, losses).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Judge endpoint could not be reached after all retries.
class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace vlmreward
