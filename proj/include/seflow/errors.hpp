#pragma once

#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace seflow {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad invocation: unknown flags, missing arguments, invalid option values. Exit code 1.
class UsageError : public Error {
 public:
  using Error::Error;
};

/// Bad input data: malformed files, shape mismatches, manifest problems. Exit code 2.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Numeric degeneracy: singular mixing matrix, non-finite loss. Exit code 3.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const UsageError*>(&e)) return 1;
  return 1;
}

namespace detail {

#if defined(__GNUC__)
__attribute__((format(printf, 1, 2)))
#endif
inline std::string
strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  va_list copy;
  va_copy(copy, args);
  int n = std::vsnprintf(nullptr, 0, fmt, copy);
  va_end(copy);
  std::string out;
  if (n > 0) {
    out.resize(static_cast<size_t>(n));
    std::vsnprintf(out.data(), out.size() + 1, fmt, args);
  }
  va_end(args);
  return out;
}

}  // namespace detail
}  // namespace seflow
