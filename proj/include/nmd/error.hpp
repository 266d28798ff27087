#ifndef NMD_ERROR_HPP_
#define NMD_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace nmd {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree, or a rank/size argument is out of range.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A symmetric system could not be factorized.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// An input lies outside the mathematical domain of an operation
/// (negative data under KL, data outside MinMax bounds, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid or incomplete configuration (missing bounds, bad constants).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The normalizer of a relative metric is zero.
class DegenerateMetricError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Line and column are 1-based; 0 means unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0,
             std::size_t column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t column() const noexcept { return column_; }

 private:
  static std::string format(const std::string& what, std::size_t line,
                            std::size_t column) {
    if (line == 0) return what;
    std::string out = "line " + std::to_string(line);
    if (column != 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  std::size_t line_;
  std::size_t column_;
};

/// A solver iterate acquired a NaN or infinite entry.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::size_t iteration)
      : Error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

}  // namespace nmd

#endif  // NMD_ERROR_HPP_
