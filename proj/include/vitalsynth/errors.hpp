#pragma once

#include <stdexcept>
#include <string>

namespace vitalsynth {

// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operation precondition violated (non-scalar differentiation root, odd pool
// length, odd batch size, ...).
struct ContractError : Error {
  using Error::Error;
};

// Operand shapes do not conform; the message names both shapes.
struct ShapeError : Error {
  using Error::Error;
};

// A value lies outside an operation's domain (label not in {0,1}, log of a
// non-positive number, unknown channel name, ...).
struct DomainError : Error {
  using Error::Error;
};

// Named parameter missing from a ParameterSet.
struct LookupError : Error {
  using Error::Error;
};

// CSV ingestion.
struct ParseError : Error {
  using Error::Error;
};
struct IncompleteSeriesError : Error {
  using Error::Error;
};
struct LabelConflictError : Error {
  using Error::Error;
};

// Normalization over a constant channel.
struct DegenerateChannelError : Error {
  using Error::Error;
};

// A class required for stratification or balanced sampling is absent.
struct StratificationError : Error {
  using Error::Error;
};

// Two datasets do not share a channel set.
struct ChannelMismatchError : Error {
  using Error::Error;
};

// Checkpoint files.
struct FormatError : Error {
  using Error::Error;
};
struct VersionError : Error {
  using Error::Error;
};
struct TruncationError : Error {
  using Error::Error;
};
struct OffsetError : Error {
  using Error::Error;
};

// Training produced a non-finite loss, or a gradient check failed.
struct NumericalError : Error {
  using Error::Error;
};

// Config file problems (unknown key, missing required key, bad type).
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace vitalsynth
