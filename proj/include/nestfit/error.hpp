#pragma once

#include <stdexcept>
#include <string>

namespace nestfit {

enum class ErrorKind {
  input,    // malformed files, bad configuration, schema mismatch
  numeric,  // invalid parameter region, non-finite utilities
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void input_error(const std::string& what) {
  throw Error(ErrorKind::input, what);
}

[[noreturn]] inline void numeric_error(const std::string& what) {
  throw Error(ErrorKind::numeric, what);
}

}  // namespace nestfit
