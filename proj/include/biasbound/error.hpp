#pragma once

#include <stdexcept>
#include <string>

namespace bb {

enum class ErrorKind {
  parse,       // malformed input file
  validation,  // well-formed input violating a contract (non-binary d, ...)
  domain,      // evaluation outside the supported domain
  capacity,    // matching cannot be completed
  contract,    // caller passed mismatched objects
  rank,        // singular Gram matrix
  degenerate,  // zero index / zero standard error
  numerical,   // iterative method failed
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library. `module()` names the component that
/// raised it so CLI messages can say where a failure came from.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string module, const std::string& message)
      : std::runtime_error(message), kind_(kind), module_(std::move(module)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& module() const noexcept { return module_; }

  /// Validation-type failures map to exit code 2, numerical ones to 3.
  bool is_numerical() const noexcept {
    return kind_ == ErrorKind::rank || kind_ == ErrorKind::degenerate ||
           kind_ == ErrorKind::numerical;
  }

 private:
  ErrorKind kind_;
  std::string module_;
};

}  // namespace bb
