#pragma once

#include <stdexcept>
#include <string>

namespace pmcts {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& what) : Error("parse error: " + what) {}
};

class DuplicateIdError : public Error {
 public:
  explicit DuplicateIdError(const std::string& id) : Error("duplicate loop id: " + id), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

// A transformation names a loop that is missing, frozen, or otherwise not a legal target.
class InvalidTargetError : public Error {
 public:
  explicit InvalidTargetError(const std::string& what) : Error("invalid target: " + what) {}
};

class MissingAnchorError : public Error {
 public:
  explicit MissingAnchorError(const std::string& id)
      : Error("no /*@loop:" + id + "*/ anchor in source template"), id_(id) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class IndexOutOfRangeError : public Error {
 public:
  IndexOutOfRangeError(std::size_t index, std::size_t count)
      : Error("child index " + std::to_string(index) + " out of range (" + std::to_string(count) +
              " children)") {}
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config error: " + what) {}
};

}  // namespace pmcts
