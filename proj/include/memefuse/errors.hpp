#pragma once

#include <stdexcept>
#include <string>

namespace memefuse {

// Invalid arguments or a broken call contract (bad shapes, bad axis, ...).
class ContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data: manifests, feature files, checkpoints.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values in a computation or a failed numerical check.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace memefuse
