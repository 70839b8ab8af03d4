#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace fairbf {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class FactorizationError : public Error {
 public:
  FactorizationError(std::size_t pivot, double value)
      : Error(make_message(pivot, value)), pivot_(pivot) {}

  std::size_t pivot() const noexcept { return pivot_; }

 private:
  static std::string make_message(std::size_t pivot, double value) {
    std::ostringstream oss;
    oss << "Cholesky factorization failed: non-positive pivot " << value
        << " at index " << pivot;
    return oss.str();
  }

  std::size_t pivot_;
};

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream oss;
  (oss << ... << std::forward<Args>(args));
  return oss.str();
}

}  // namespace detail

}  // namespace fairbf
