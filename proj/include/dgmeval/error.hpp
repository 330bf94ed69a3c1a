#pragma once

#include <stdexcept>
#include <string>

namespace dgmeval {

// Failures caused by bad input data or files (CLI exit code 2).
class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class validation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violations on programmatic arguments.
class argument_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace dgmeval
