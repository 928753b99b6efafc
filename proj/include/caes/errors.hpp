#pragma once

#include <stdexcept>
#include <string>

namespace caes {

// Base class for every error raised by the pipeline. The CLI maps these to
// exit code 2 (runtime) or 1 (validation).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ZeroVarianceError : public Error {
 public:
  using Error::Error;
};

class GenerationFailure : public Error {
 public:
  using Error::Error;
};

class MissingMetaError : public Error {
 public:
  using Error::Error;
};

class MalformedRowError : public Error {
 public:
  MalformedRowError(const std::string& file, int line, const std::string& why)
      : Error(file + ":" + std::to_string(line) + ": " + why) {}
};

class DimensionMismatchError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class UnlabeledPairError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

class ChecksumMismatchError : public Error {
 public:
  using Error::Error;
};

class VersionUnsupportedError : public Error {
 public:
  using Error::Error;
};

class EmptyClassError : public Error {
 public:
  using Error::Error;
};

class MaskShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class UnreadableImageError : public Error {
 public:
  using Error::Error;
};

class ClassMismatchError : public Error {
 public:
  using Error::Error;
};

class SizeMismatchError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

class GradientUnavailableError : public Error {
 public:
  using Error::Error;
};

class DegenerateHeatmapError : public Error {
 public:
  using Error::Error;
};

class MissingHumanMaskError : public Error {
 public:
  using Error::Error;
};

class TooFewSamplesError : public Error {
 public:
  using Error::Error;
};

class NegativeInputError : public Error {
 public:
  using Error::Error;
};

class IncompleteScoringError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by config validation; carries the offending field path.
class ConfigInvalidError : public Error {
 public:
  ConfigInvalidError(const std::string& field, const std::string& why)
      : Error(field + ": " + why), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace caes
