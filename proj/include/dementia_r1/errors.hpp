#pragma once

#include <stdexcept>
#include <string>

namespace dr1 {

// Invalid configuration values or combinations (cohort bounds, GRPO hyper-
// parameters, recipe arms). The CLI maps these to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller passed an argument outside an operation's domain.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input text: cohort lines, sample files, checkpoints, prompts.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values produced during forward passes or updates.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Class balancing impossible because one class is empty.
class BalancingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Name not registered (tolerance profile entries, heads).
class LookupError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

}  // namespace dr1

namespace dr1 {

// The leakage audit found violations; training must not start.
class LeakageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dr1

namespace dr1 {

// A file could not be opened, read, or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dr1
