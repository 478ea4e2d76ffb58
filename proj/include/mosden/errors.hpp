#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mosden {

/// Base of every error raised by the middleware. `code()` is the
/// machine-readable name that also appears in HTTP error bodies.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string& detail)
      : std::runtime_error(detail), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

private:
  std::string code_;
};

#define MOSDEN_DEFINE_ERROR(Name)                                              \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& detail) : Error(#Name, detail) {}        \
  }

/// Errors carrying a JSON pointer to the offending key of a document.
class DocumentError : public Error {
public:
  DocumentError(std::string code, std::string pointer, const std::string& detail)
      : Error(std::move(code), pointer.empty() ? detail : pointer + ": " + detail),
        pointer_(std::move(pointer)) {}

  const std::string& pointer() const noexcept { return pointer_; }

private:
  std::string pointer_;
};

class SchemaError : public DocumentError {
public:
  SchemaError(std::string pointer, const std::string& detail)
      : DocumentError("SchemaError", std::move(pointer), detail) {}
};

class InvariantError : public DocumentError {
public:
  InvariantError(std::string pointer, const std::string& detail)
      : DocumentError("InvariantError", std::move(pointer), detail) {}
};

MOSDEN_DEFINE_ERROR(TypeMismatch);
MOSDEN_DEFINE_ERROR(IoError);
MOSDEN_DEFINE_ERROR(ConfigError);
MOSDEN_DEFINE_ERROR(ScenarioError);
MOSDEN_DEFINE_ERROR(NegativeInput);

// plugin-host
MOSDEN_DEFINE_ERROR(PluginProtocolError);
MOSDEN_DEFINE_ERROR(PluginTimeout);
MOSDEN_DEFINE_ERROR(SchemaViolation);
MOSDEN_DEFINE_ERROR(InvalidPluginState);
MOSDEN_DEFINE_ERROR(UnknownPlugin);

class PluginRejectedConfig : public Error {
public:
  PluginRejectedConfig(std::string key, const std::string& detail)
      : Error("PluginRejectedConfig", detail), key_(std::move(key)) {}
  /// Name of the offending config key when the plugin reported one.
  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

// wrapper-engine / stream-processor
MOSDEN_DEFINE_ERROR(FieldNotInSchema);
MOSDEN_DEFINE_ERROR(UnknownVirtualSensor);
MOSDEN_DEFINE_ERROR(DuplicateVirtualSensor);
MOSDEN_DEFINE_ERROR(OutOfOrderTimestamp);

// node-api / registry
MOSDEN_DEFINE_ERROR(BadRequest);
MOSDEN_DEFINE_ERROR(ExpiredOnArrival);
MOSDEN_DEFINE_ERROR(BadEndpoint);
MOSDEN_DEFINE_ERROR(UnknownSubscription);
MOSDEN_DEFINE_ERROR(RemoteUnreachable);
MOSDEN_DEFINE_ERROR(RemoteUnknownVS);
MOSDEN_DEFINE_ERROR(NoMatch);
MOSDEN_DEFINE_ERROR(UnknownRequest);

#undef MOSDEN_DEFINE_ERROR

} // namespace mosden
