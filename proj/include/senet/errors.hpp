#ifndef SENET_ERRORS_HPP
#define SENET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace senet {

// Base of all library errors. DataError maps to CLI exit code 3,
// NumericError to exit code 4.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

// record_io
struct MalformedHeader : DataError {
  using DataError::DataError;
};
struct LeadCountMismatch : DataError {
  using DataError::DataError;
};
struct LengthMismatch : DataError {
  using DataError::DataError;
};
struct EmptyDataset : DataError {
  using DataError::DataError;
};

// preprocess
struct DegenerateSignal : DataError {
  using DataError::DataError;
};
struct InvalidAge : DataError {
  using DataError::DataError;
};

// autodiff
struct ShapeMismatch : NumericError {
  using NumericError::NumericError;
};
struct DegenerateBatch : NumericError {
  using NumericError::NumericError;
};
struct DoubleBackward : NumericError {
  using NumericError::NumericError;
};

// model / config
struct InvalidConfig : DataError {
  using DataError::DataError;
};
struct ModelClassMapMismatch : DataError {
  using DataError::DataError;
};

// training
struct TrainingDiverged : NumericError {
  using NumericError::NumericError;
};

// metrics
struct DegenerateNormalization : NumericError {
  using NumericError::NumericError;
};
struct NoDecisiveExamples : DataError {
  using DataError::DataError;
};
struct DegenerateMarginals : NumericError {
  using NumericError::NumericError;
};

// synth
struct InvalidSpec : DataError {
  using DataError::DataError;
};

}  // namespace senet

#endif  // SENET_ERRORS_HPP
