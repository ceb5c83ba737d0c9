#pragma once

#include <stdexcept>
#include <string>

namespace mmtrust {

// Base of every error raised by the library. Each failure mode named by the
// public API gets its own subtype so callers can catch precisely.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MMTRUST_DEFINE_ERROR(Name)     \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

// core
MMTRUST_DEFINE_ERROR(InsufficientSamples);
MMTRUST_DEFINE_ERROR(InvalidDataset);
// imgproc / features
MMTRUST_DEFINE_ERROR(SingularHomography);
MMTRUST_DEFINE_ERROR(ConfigMismatch);
MMTRUST_DEFINE_ERROR(ImageTooSmall);
MMTRUST_DEFINE_ERROR(ImageFormatError);
// classifiers
MMTRUST_DEFINE_ERROR(EmptyTrainingSet);
MMTRUST_DEFINE_ERROR(DimensionMismatch);
MMTRUST_DEFINE_ERROR(SingleClassTraining);
MMTRUST_DEFINE_ERROR(MissingClassifier);
// ccls
MMTRUST_DEFINE_ERROR(ShapeMismatch);
// fusion
MMTRUST_DEFINE_ERROR(UnknownScene);
MMTRUST_DEFINE_ERROR(NoModalitiesAvailable);
MMTRUST_DEFINE_ERROR(AllModalitiesMissing);
MMTRUST_DEFINE_ERROR(CorruptModel);
MMTRUST_DEFINE_ERROR(VersionMismatch);
// synthdata
MMTRUST_DEFINE_ERROR(MissingFile);
MMTRUST_DEFINE_ERROR(ManifestMismatch);
// eval
MMTRUST_DEFINE_ERROR(LengthMismatch);
MMTRUST_DEFINE_ERROR(IoError);

#undef MMTRUST_DEFINE_ERROR

}  // namespace mmtrust
