#pragma once

#include <stdexcept>
#include <string>

namespace eqfa {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Weight vector sums to (numerically) zero; weighted statistics undefined.
struct ZeroWeightError : Error {
  using Error::Error;
};

/// Fewer points than a frame or alignment needs.
struct TooFewPointsError : Error {
  using Error::Error;
};

/// Procrustes cross-covariance has two vanishing singular values; the
/// optimal rotation is not unique.
struct DegenerateAlignmentError : Error {
  using Error::Error;
};

/// Rotation angle within tolerance of pi; the geodesic is not unique.
struct NearPiRotationError : Error {
  using Error::Error;
};

struct ShapeMismatchError : Error {
  using Error::Error;
};

struct DimensionMismatchError : Error {
  using Error::Error;
};

struct NotScalarLossError : Error {
  using Error::Error;
};

struct EmptyCloudError : Error {
  using Error::Error;
};

struct EmptyBatchError : Error {
  using Error::Error;
};

struct EmptySampleError : Error {
  using Error::Error;
};

struct InvalidSpecError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

/// Text-format parse failure; carries the 1-based line number.
struct ParseError : Error {
  ParseError(const std::string& what, int line_number)
      : Error(what + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
  int line;
};

}  // namespace eqfa
