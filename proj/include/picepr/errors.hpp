#pragma once

#include <stdexcept>
#include <string>

namespace picepr {

/// Base class for all errors raised by this library. `code()` returns a
/// stable machine-readable identifier (e.g. "MissingColumn") so callers and
/// the CLI can report errors without string-matching the human message.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

class CorpusError : public Error {
    using Error::Error;
};

class GatewayError : public Error {
    using Error::Error;
};

/// Transport-level failure after all retries were exhausted.
class TransportError : public GatewayError {
public:
    explicit TransportError(const std::string& message) : GatewayError("TransportError", message) {}
};

class AuthError : public GatewayError {
public:
    explicit AuthError(const std::string& message) : GatewayError("AuthError", message) {}
};

class RateLimited : public GatewayError {
public:
    explicit RateLimited(const std::string& message) : GatewayError("RateLimited", message) {}
};

/// Request shape not acceptable for the target backend (wrong kind, or a
/// response format the backend's declared output structure cannot honor).
/// Raised before any network traffic.
class BackendRejectedFormat : public GatewayError {
public:
    explicit BackendRejectedFormat(const std::string& message)
        : GatewayError("BackendRejectedFormat", message) {}
};

class DimensionMismatch : public Error {
public:
    explicit DimensionMismatch(const std::string& message) : Error("DimensionMismatch", message) {}
};

class TemplateError : public Error {
    using Error::Error;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("ConfigError", message) {}
};

class UsageError : public Error {
public:
    explicit UsageError(const std::string& message) : Error("UsageError", message) {}
};

}  // namespace picepr
