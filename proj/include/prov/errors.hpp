#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace prov {

// Every fault the library can raise, by name. CLI and service surfaces
// report the kind string verbatim so callers can match on it.
enum class ErrorKind {
  InvalidSpec,
  CompositeCycle,
  ImmutableOverwrite,
  BackendUnavailable,
  NotFound,
  BadConfig,
  UnknownItem,
  UnknownVersion,
  UnknownExecution,
  UnknownNode,
  UnknownArtifact,
  IllegalTransition,
  MissingOutcome,
  AlreadyFinished,
  StatusMismatch,
  MissingInput,
  UnresolvableInputs,
  EmptyExecution,
  ExecutionOpen,
  InvalidGraph,
  MalformedXml,
  SchemaViolation,
  TooLarge,
  MalformedInput,
  ExecutorRejected,
  AddressInUse,
  Internal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(std::move(message)) {}

  ErrorKind kind() const { return kind_; }
  const std::string& message() const { return message_; }

  // Violation messages for InvalidSpec / InvalidGraph, when available.
  const std::vector<std::string>& details() const { return details_; }
  Error& with_details(std::vector<std::string> details) {
    details_ = std::move(details);
    return *this;
  }

 private:
  ErrorKind kind_;
  std::string message_;
  std::vector<std::string> details_;
};

}  // namespace prov
