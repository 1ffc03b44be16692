#ifndef BBADV_ERRORS_HPP
#define BBADV_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace bbadv {

/// Error taxonomy used across the toolkit. Every failure mode surfaces as
/// one of these so callers (and tests) can tell shape bugs from file
/// corruption from misbehaving oracles.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};

struct ParameterError : std::runtime_error {
  explicit ParameterError(const std::string& m) : std::runtime_error(m) {}
};

struct BoundsError : std::runtime_error {
  explicit BoundsError(const std::string& m) : std::runtime_error(m) {}
};

// Malformed on-disk data (bad magic, bogus dimensions).
struct FormatError : std::runtime_error {
  explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};

// Payload shorter (or longer) than the header promises.
struct LengthError : std::runtime_error {
  explicit LengthError(const std::string& m) : std::runtime_error(m) {}
};

// An oracle violated the query contract (wrong length, not a distribution).
struct ProtocolError : std::runtime_error {
  explicit ProtocolError(const std::string& m) : std::runtime_error(m) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& m) : std::runtime_error(m) {}
};

struct TrainingError : std::runtime_error {
  explicit TrainingError(const std::string& m) : std::runtime_error(m) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace bbadv

#endif
