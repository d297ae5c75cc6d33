#pragma once

#include <stdexcept>
#include <string>

namespace mmtod {

// Malformed or invariant-violating input data (corpus files, configs,
// checkpoints). Maps to exit code 2 in the CLI.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line usage or configuration keys. Exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mmtod
