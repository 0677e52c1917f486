#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace logact {

enum class Errc {
  PermissionDenied,
  InvalidRange,
  BusClosed,
  CorruptLog,
  CorruptSnapshot,
  IoFailure,
  MalformedPolicy,
  MalformedInput,
  MalformedActionBlock,
  NotAPrefix,
  Fenced,
  AdapterUnavailable,
  InferenceFailure,
  SandboxViolation,
  UnknownBus,
  DuplicateBusId,
  SpawnFailure,
  UnknownTarget,
  OracleFailure,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(errc_name(code)) + ": " + message), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& message) { throw Error(code, message); }

}  // namespace logact
