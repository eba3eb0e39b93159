#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cevit {

/// Root of every error the library raises. `kind()` maps onto CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { usage, domain, parameter, estimation, training, parse, io, config, data };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& w) : Error(Kind::usage, w) {}
};

// Argument outside the mathematical domain (|rho| >= 1, p outside (0,1), non-PD covariance).
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error(Kind::domain, w) {}
};

struct ParameterError : Error {
  explicit ParameterError(const std::string& w) : Error(Kind::parameter, w) {}
};

struct EstimationError : Error {
  explicit EstimationError(const std::string& w) : Error(Kind::estimation, w) {}
};

struct TrainingError : Error {
  explicit TrainingError(const std::string& w) : Error(Kind::training, w) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(Kind::config, w) {}
};

// Well-formed input that cannot be used (empty report, missing columns).
struct DataError : Error {
  explicit DataError(const std::string& w) : Error(Kind::data, w) {}
};

struct IoError : Error {
  explicit IoError(const std::string& w) : Error(Kind::io, w) {}
};

/// Malformed input file. Carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(const std::string& w, std::size_t offset)
      : Error(Kind::parse, w + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace cevit
