#pragma once

#include <stdexcept>
#include <string>

namespace sf {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or rank disagreement between operands.
struct ShapeError : Error {
  using Error::Error;
};

// Operation called against an object in the wrong lifecycle state
// (closed session, backward without a tape, cache/config mismatch).
struct StateError : Error {
  using Error::Error;
};

// API misuse that is detectable at the call site (streaming call with a
// multi-frame clip, bidirectional attention in a stream).
struct UsageError : Error {
  using Error::Error;
};

// Fixed capacity exceeded (frame counter past max_frames).
struct CapacityError : Error {
  using Error::Error;
};

// Invalid input payload (bad label id, empty token stream, mask mismatch).
struct InputError : Error {
  using Error::Error;
};

// Numeric degeneracy (all-masked softmax slice, zero-norm vector,
// non-finite values where finite ones are required).
struct NumericError : Error {
  using Error::Error;
};

// Malformed file content (checkpoint manifest, config file, sample dump).
struct ParseError : Error {
  using Error::Error;
};

}  // namespace sf
