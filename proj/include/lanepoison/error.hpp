#pragma once

#include <stdexcept>
#include <string>

namespace lanepoison {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent configuration / arguments (CLI exit code 2).
struct ConfigError : Error {
  using Error::Error;
};

// Filesystem / encoding failures (CLI exit code 3).
struct IoError : Error {
  using Error::Error;
};

// Malformed dataset record; message names the offending file/record.
struct ParseError : IoError {
  using IoError::IoError;
};

// Checkpoint magic/version/kind mismatch (CLI exit code 4).
struct CheckpointError : Error {
  using Error::Error;
};

// Fewer usable points than an operation needs (e.g. spline fit).
struct InsufficientPointsError : Error {
  using Error::Error;
};

// Geometrically degenerate input (duplicate knot rows, zero-area window...).
struct DegenerateInputError : Error {
  using Error::Error;
};

// Rotated lane segment folded past horizontal; required row not resamplable.
struct RotationDegenerateError : Error {
  using Error::Error;
};

// No placement window satisfies the road-coverage constraint.
struct EmptyCandidateError : Error {
  using Error::Error;
};

// Metric denominator empty (no scoreable points).
struct UndefinedMetricError : Error {
  using Error::Error;
};

// Tensor/label shape disagreement.
struct ShapeError : Error {
  using Error::Error;
};

// Training produced non-finite loss or parameters.
struct DivergenceError : Error {
  using Error::Error;
};

// Masked SSIM asked for a region no whole window is centered in.
struct SsimWindowError : Error {
  using Error::Error;
};

}  // namespace lanepoison
