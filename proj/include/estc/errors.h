#pragma once

#include <stdexcept>
#include <string>

namespace estc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input files or records.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input violates a documented precondition or invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class NotFoundError : public Error {
 public:
  using Error::Error;
};

// State transition that is no longer allowed (e.g. reviewing a published
// channel twice).
class ConflictError : public Error {
 public:
  using Error::Error;
};

// Network failure talking to a remote generator.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace estc
