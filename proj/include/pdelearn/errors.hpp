#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pdelearn {

/// Invalid user configuration (shapes, sizes, hyperparameters).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Evaluation outside a function's domain (zero denominators).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed text or binary input. `position` is a byte offset or, for
/// line-oriented formats, the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : std::runtime_error(what + " (at " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

/// Non-finite values during training or solving.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pruning removed every right-hand-side term.
class EmptyPdeError : public std::runtime_error {
 public:
  EmptyPdeError() : std::runtime_error("empty PDE: every library term was pruned") {}
};

}  // namespace pdelearn
