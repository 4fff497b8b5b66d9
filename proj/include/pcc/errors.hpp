#ifndef PCC_ERRORS_HPP
#define PCC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace pcc {

// Raised when a row of a kernel matrix sums to zero but normalization was requested.
class DegenerateKernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by compose() when adjacent stages do not line up.
class CompositionError : public std::invalid_argument {
 public:
  CompositionError(std::size_t inner, std::size_t outer, const std::string& what)
      : std::invalid_argument("stages " + std::to_string(inner) + " -> " + std::to_string(outer) +
                              ": " + what),
        inner_(inner),
        outer_(outer) {}

  std::size_t inner() const noexcept { return inner_; }
  std::size_t outer() const noexcept { return outer_; }

 private:
  std::size_t inner_;
  std::size_t outer_;
};

// Factorization or other numerical failure. Carries the last jitter level tried.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what, double jitter = 0.0)
      : std::runtime_error(what), jitter_(jitter) {}

  double jitter() const noexcept { return jitter_; }

 private:
  double jitter_;
};

// Input file could not be parsed. line() is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class InsufficientSampleError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace pcc

#endif  // PCC_ERRORS_HPP
