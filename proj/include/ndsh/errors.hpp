#ifndef NDSH_ERRORS_HPP
#define NDSH_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ndsh {

// Malformed input file (bvals/bvecs, experiment spec, volume sidecar).
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& path, int line, int column, const std::string& what_arg)
      : std::runtime_error(path + ":" + std::to_string(line) + ":" + std::to_string(column)
                           + ": " + what_arg),
        path_(path), line_(line), column_(column) {}

  const std::string& path() const { return path_; }
  int line() const { return line_; }
  int column() const { return column_; }

private:
  std::string path_;
  int line_;
  int column_;
};

// Numerical failure inside the constrained solver (rank deficiency, breakdown).
class SolverError : public std::runtime_error {
public:
  explicit SolverError(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

// Non-convergent series or pathological sampling parameters.
class NumericError : public std::runtime_error {
public:
  explicit NumericError(const std::string& what_arg) : std::runtime_error(what_arg) {}
};

}  // namespace ndsh

#endif
