#pragma once

#include <stdexcept>
#include <string>

namespace ssmnd {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SSMND_DEFINE_ERROR(Name)          \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

SSMND_DEFINE_ERROR(ShapeError);
SSMND_DEFINE_ERROR(InvalidPermutation);
SSMND_DEFINE_ERROR(MissingSeed);
SSMND_DEFINE_ERROR(InvalidOrdering);
SSMND_DEFINE_ERROR(InvalidDelta);
SSMND_DEFINE_ERROR(InvalidBoundary);
SSMND_DEFINE_ERROR(HeadSplitError);
SSMND_DEFINE_ERROR(ArrangementError);
SSMND_DEFINE_ERROR(FactorizationError);
SSMND_DEFINE_ERROR(PatchError);
SSMND_DEFINE_ERROR(InflateError);
SSMND_DEFINE_ERROR(PolicyError);
SSMND_DEFINE_ERROR(IndexError);
SSMND_DEFINE_ERROR(TaskError);
SSMND_DEFINE_ERROR(CheckpointError);

#undef SSMND_DEFINE_ERROR

/// Configuration validation failure. `path` names the offending field,
/// e.g. "model.patch[1]".
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace ssmnd
