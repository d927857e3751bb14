#pragma once

#include <stdexcept>
#include <string>

namespace docnli {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// corpus
struct ParseError : Error {
  using Error::Error;
};
struct ValidationError : Error {
  using Error::Error;
};
struct UnsupportedVersionError : ParseError {
  using ParseError::ParseError;
};
struct EmptyCorpusError : Error {
  using Error::Error;
};
struct IOError : Error {
  using Error::Error;
};

// segmentation / context
struct EmptySpanError : Error {
  using Error::Error;
};
struct SpanTooLongError : Error {
  using Error::Error;
};
struct LengthOverflowError : Error {
  using Error::Error;
};

// model
struct NonFiniteError : Error {
  using Error::Error;
};
struct ShapeMismatchError : Error {
  using Error::Error;
};
struct DivergenceError : Error {
  using Error::Error;
};

// aggregate
struct UncoveredSpanError : Error {
  using Error::Error;
};
struct ZeroWeightError : Error {
  using Error::Error;
};

// metrics
struct NoGoldError : Error {
  using Error::Error;
};

// baselines
struct DegenerateClassError : Error {
  using Error::Error;
};

}  // namespace docnli
