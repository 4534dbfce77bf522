#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lobhawkes {

// Malformed or inconsistent input. The CLI maps it to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A parse failure with the offending (0-based) data row.
class ParseError : public InputError {
 public:
  ParseError(const std::string& source, std::size_t row, const std::string& what)
      : InputError(source + ":" + std::to_string(row) + ": " + what), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// Numerical failure (non-convergence, non-PSD Gram matrix, zero intensity at an
// event...). The CLI maps it to exit code 1.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace lobhawkes
