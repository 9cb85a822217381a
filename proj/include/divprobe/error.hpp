#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace divprobe {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `line()` is 1-based, 0 when not line-oriented.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A JSON object is missing a required field or has the wrong type for one.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& field, const std::string& what)
      : Error("field '" + field + "': " + what), field_(field), detail_(what) {}
  const std::string& field() const noexcept { return field_; }

  /// Same error, prefixed with "source:line: ".
  SchemaError at(const std::string& source, std::size_t line) const {
    SchemaError located(field_, detail_);
    static_cast<Error&>(located) = Error(source + ":" + std::to_string(line) + ": " + what());
    return located;
  }

 private:
  std::string field_;
  std::string detail_;
};

/// Violated precondition or invariant on in-memory values.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad configuration or command-line input; maps to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Connection-level failure (refused, timeout, reset).
class TransportError : public Error {
 public:
  using Error::Error;
};

class HttpStatusError : public Error {
 public:
  HttpStatusError(int status, const std::string& body_excerpt)
      : Error("HTTP " + std::to_string(status) + ": " + body_excerpt),
        status_(status),
        body_excerpt_(body_excerpt) {}
  int status() const noexcept { return status_; }
  const std::string& body_excerpt() const noexcept { return body_excerpt_; }

 private:
  int status_;
  std::string body_excerpt_;
};

}  // namespace divprobe
