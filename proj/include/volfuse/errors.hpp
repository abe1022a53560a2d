#pragma once

#include <stdexcept>
#include <string>

namespace volfuse {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed input file; the message names the offending field/row.
struct ParseError : Error {
  using Error::Error;
};

// A CDR value outside the four legal ratings.
struct InvalidLabelError : Error {
  using Error::Error;
};

// Invalid configuration or command-line input.
struct ConfigError : Error {
  using Error::Error;
};

// Phantom geometry that cannot be realized (e.g. ventricle outside brain).
struct GeometryError : Error {
  using Error::Error;
};

// Modalities whose grids do not share dims/spacing.
struct AlignmentError : Error {
  using Error::Error;
};

// Tensor shape incompatible with the network contract.
struct ShapeError : Error {
  using Error::Error;
};

// A stratum too small for the requested fold count.
struct StratificationError : Error {
  using Error::Error;
};

// Input too degenerate to process (e.g. constant intensities for the GMM).
struct DegenerateInputError : Error {
  using Error::Error;
};

// A metric that has no defined value on the given inputs (single-class AUC).
struct UndefinedMetricError : Error {
  using Error::Error;
};

// Subject leakage detected where a clean plan is required.
struct LeakageError : Error {
  using Error::Error;
};

// Non-finite loss during optimization.
struct TrainingDiverged : Error {
  using Error::Error;
};

}  // namespace volfuse
