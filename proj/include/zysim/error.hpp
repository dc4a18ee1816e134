#ifndef ZYSIM_ERROR_HPP
#define ZYSIM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace zysim {

// Base for everything the library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad input: malformed files, violated preconditions, invalid configs.
// The CLI maps these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A conditional probability was requested for a pattern that never occurs.
// Kept distinct so callers never confuse "no data" with probability 0.
class NoWindowsError : public Error {
 public:
  using Error::Error;
};

// A quantity that diverges for the given input (e.g. eta = 1).
class UnboundedError : public Error {
 public:
  using Error::Error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ValidationError(what);
}

}  // namespace zysim

#endif  // ZYSIM_ERROR_HPP
