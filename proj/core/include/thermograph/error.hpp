#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thermograph {

enum class ErrorKind {
  kBounds,
  kShape,
  kParse,
  kControl,
  kIntegration,
  kLabel,
  kModelCorrupt,
  kConfig,
  kUndefinedTau,
  kDomain,
  kCheckpoint,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// All library failures are reported through this type; `kind()` is what the
// CLI prints in its machine-readable error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace thermograph
