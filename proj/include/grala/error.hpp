#pragma once

#include <stdexcept>
#include <string>

namespace grala {

/// Base of every engine error. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input document; `position` is a byte offset when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position = npos)
      : Error(position == npos ? what : what + " (at byte " + std::to_string(position) + ")"),
        position_(position) {}
  std::size_t position() const { return position_; }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::size_t position_;
};

/// Input is well-formed but violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A guidance, refiner, LLM, or scorer backend failed or answered out of protocol.
class ProviderError : public Error {
 public:
  using Error::Error;
};

class TransportError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class ProtocolVersionError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class NonFiniteError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

}  // namespace grala
