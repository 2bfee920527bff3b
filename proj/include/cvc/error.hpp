#pragma once

#include <stdexcept>
#include <string>

namespace cvc {

/// Domain error raised by a module. The qualified name is "<module>.<Kind>",
/// e.g. "audio_frontend.TooShort", and is what the CLI prints on exit code 1.
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string kind, const std::string& detail)
      : std::runtime_error(module + "." + kind + ": " + detail),
        module_(std::move(module)),
        kind_(std::move(kind)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& kind() const noexcept { return kind_; }
  std::string qualified_name() const { return module_ + "." + kind_; }

 private:
  std::string module_;
  std::string kind_;
};

/// Bad command line or configuration document (CLI exit code 2).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cvc
