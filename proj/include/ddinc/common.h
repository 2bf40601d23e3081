#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ddinc {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed user input (rule files, TSV, graph files). Carries a 1-based
// source position when one is known; line 0 means "no position".
class InputError : public Error {
 public:
  InputError(const std::string& what, int line = 0, int column = 0)
      : Error(format(what, line, column)), line_(line), column_(column) {}

  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(const std::string& what, int line, int column) {
    if (line <= 0) return what;
    std::string out = "line " + std::to_string(line);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ": " + what;
  }

  int line_;
  int column_;
};

// Program refers to relations that do not match the store schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A requested computation exceeds a hard limit (enumeration cap, ...).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Iterative solver stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double gap)
      : Error(what + " (last duality gap " + std::to_string(gap) + ")"),
        gap_(gap) {}
  double gap() const { return gap_; }

 private:
  double gap_;
};

// Function g applied to the satisfied-grounding count of a factor.
enum class Semantics : std::uint8_t { kLinear, kRatio, kLogical };

enum class Label : std::uint8_t { kPositive, kNegative };

std::string_view to_string(Semantics s);
std::optional<Semantics> parse_semantics(std::string_view s);

}  // namespace ddinc
