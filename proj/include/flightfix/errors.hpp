#pragma once

#include <stdexcept>
#include <string>

namespace flightfix {

/// Base class for every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class ConnectionError : public Error {
 public:
  using Error::Error;
};

/// Operation on a mission that already ended.
class StaleHandle : public Error {
 public:
  using Error::Error;
};

/// Telemetry stream violated its ordering contract.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// No JSON object could be located in an advisor completion.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// JSON was found but carried no usable parameter updates.
class AdviceRejected : public Error {
 public:
  using Error::Error;
};

class AdvisorUnavailable : public Error {
 public:
  using Error::Error;
};

/// One failed transport attempt against an advisor backend; retried by query().
class TransportError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flightfix
