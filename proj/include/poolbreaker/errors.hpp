#pragma once

#include <stdexcept>
#include <string>

namespace poolbreaker {

// Base for every error raised by the library. `kind()` is a stable,
// machine-readable tag used by the CLI when reporting failures.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Shape, symmetry or index problems in caller-supplied data.
struct StructuralError : Error {
  explicit StructuralError(const std::string& what) : Error("structural", what) {}
};

struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

struct IngestionError : Error {
  explicit IngestionError(const std::string& what) : Error("ingestion", what) {}
};

struct SplitError : Error {
  explicit SplitError(const std::string& what) : Error("split", what) {}
};

struct DeserializationError : Error {
  explicit DeserializationError(const std::string& what) : Error("deserialization", what) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what) : Error("divergence", what) {}
};

struct PreconditionError : Error {
  explicit PreconditionError(const std::string& what) : Error("precondition", what) {}
};

// Invalid configuration; `field()` holds the dotted path of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error("config", field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace poolbreaker
