#pragma once

#include <stdexcept>
#include <string>

namespace stylescout {

// Error taxonomy shared by the engine, the wire protocol and the HTTP layer.
// Each kind maps onto one transport status (422 / 404 / 502 / 409).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* code() const noexcept { return "error"; }
};

// Precondition or contract violation in a request.
class InvalidArgument : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "invalid_argument"; }
};

// Unknown node, cluster, direction, exemplar or session id.
class NotFound : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "not_found"; }
};

class AtRoot : public InvalidArgument {
 public:
  AtRoot() : InvalidArgument("at root") {}
  const char* code() const noexcept override { return "at_root"; }
};

// Raised by (or propagated from) a generator backend.
class BackendError : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "backend_error"; }
};

class StaleRevision : public Error {
 public:
  using Error::Error;
  const char* code() const noexcept override { return "stale_revision"; }
};

}  // namespace stylescout
