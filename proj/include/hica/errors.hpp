#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hica {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  DimensionError(const std::string& where, std::size_t expected, std::size_t got)
      : Error(where + ": expected dim " + std::to_string(expected) + ", got " + std::to_string(got)),
        expected_(expected),
        got_(got) {}

  std::size_t expected() const { return expected_; }
  std::size_t got() const { return got_; }

 private:
  std::size_t expected_;
  std::size_t got_;
};

class UnknownTokenError : public Error {
 public:
  explicit UnknownTokenError(char c)
      : Error(std::string("character not in alphabet: '") + c + "' (code " +
              std::to_string(static_cast<unsigned char>(c)) + ")"),
        token_(c) {}

  char token() const { return token_; }

 private:
  char token_;
};

// Raised when a unit's loss goes non-finite or a parameter magnitude exceeds the guard.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string unit, double lr, const std::string& detail)
      : Error("divergence in unit '" + unit + "' (lr=" + std::to_string(lr) + "): " + detail),
        unit_(std::move(unit)),
        lr_(lr),
        detail_(detail) {}

  const std::string& unit() const { return unit_; }
  double lr() const { return lr_; }
  const std::string& detail() const { return detail_; }

 private:
  std::string unit_;
  double lr_;
  std::string detail_;
};

class GraphError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error("config field '" + field + "': " + message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace hica
