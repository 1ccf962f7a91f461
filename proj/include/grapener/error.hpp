#ifndef GRAPENER_ERROR_HPP
#define GRAPENER_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace grapener {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input data; line numbers are 1-based.
struct ParseError : Error {
  ParseError(const std::string& msg, size_t line)
      : Error("line " + std::to_string(line) + ": " + msg), line(line) {}
  size_t line;
};

// Bad experiment configuration or missing files.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace grapener

#endif
