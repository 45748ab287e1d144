#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dbleu {

/// Base of every error thrown by the library. The CLI maps each subclass to
/// its own exit code.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid arguments or option combinations (exit code 1).
class UsageError : public Error {
  public:
    using Error::Error;
};

/// Malformed or inconsistent input data (exit code 2).
class DataError : public Error {
  public:
    using Error::Error;

    DataError(const std::string &file, std::size_t line, const std::string &what)
        : Error(file + ":" + std::to_string(line) + ": " + what) {}
};

/// A statistic is undefined on the given input, e.g. a correlation over a
/// constant vector (exit code 3).
class DegenerateError : public Error {
  public:
    using Error::Error;
};

} // namespace dbleu
