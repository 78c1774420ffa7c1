#pragma once

#include <stdexcept>
#include <string>

namespace har {

// Error taxonomy shared by the whole library. The C API and the CLI map
// these kinds onto status/exit codes, so every throw site must pick the
// right one:
//   config   - invalid user-supplied configuration or arguments
//   io       - missing/corrupt files, unwritable paths
//   numeric  - NaN/Inf encountered, diverging optimisation
//   contract - API misuse (bad shapes, stale graphs, domain violations)
enum class ErrorKind { config, io, numeric, contract };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) {
  throw Error(ErrorKind::config, msg);
}
[[noreturn]] inline void throw_io(const std::string& msg) {
  throw Error(ErrorKind::io, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& msg) {
  throw Error(ErrorKind::numeric, msg);
}
[[noreturn]] inline void throw_contract(const std::string& msg) {
  throw Error(ErrorKind::contract, msg);
}

}  // namespace har
