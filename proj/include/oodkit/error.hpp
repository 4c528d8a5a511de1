#pragma once

#include <stdexcept>
#include <string>

namespace oodkit {

// Invalid or inconsistent input data: unreadable files, dimension or label
// mismatches, non-finite values, violated operation preconditions.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure that survived regularization, e.g. a covariance
// factorization that does not go through.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace oodkit
