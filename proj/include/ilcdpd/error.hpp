#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ilcdpd {

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
  InvalidInput,         // non-finite samples, malformed arguments
  UndefinedStatistic,   // e.g. PAPR of an all-zero signal
  GenerationFailed,     // PAPR bounds not met within the attempt cap
  DegenerateExcitation, // multisine bin too weak to estimate the FRF
  UnusableBla,          // every bin below the inversion floor
  Divergence,           // ILC update blew up
  IllConditioned,       // rank-deficient regressor
  PlantDiverged,        // non-finite plant output
  Connection,
  Timeout,
  RemoteError,
  Protocol,
  Config,
  Io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Error frame carried back from a remote plant server.
class RemoteError : public Error {
 public:
  RemoteError(std::uint32_t code, const std::string& what)
      : Error(ErrorKind::RemoteError, what), code_(code) {}

  std::uint32_t code() const noexcept { return code_; }

 private:
  std::uint32_t code_;
};

}  // namespace ilcdpd
