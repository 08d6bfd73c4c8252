#pragma once

#include <stdexcept>
#include <string>

namespace skullstrip {

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SKULLSTRIP_DEFINE_ERROR(Name)                                   \
  struct Name : Error {                                                 \
    explicit Name(const std::string& msg) : Error(#Name ": " + msg) {} \
  }

SKULLSTRIP_DEFINE_ERROR(IoFailure);
SKULLSTRIP_DEFINE_ERROR(MalformedHeader);
SKULLSTRIP_DEFINE_ERROR(UnsupportedDatatype);
SKULLSTRIP_DEFINE_ERROR(TruncatedData);
SKULLSTRIP_DEFINE_ERROR(ShapeMismatch);
SKULLSTRIP_DEFINE_ERROR(IndexOutOfRange);
SKULLSTRIP_DEFINE_ERROR(ImageTooSmall);
SKULLSTRIP_DEFINE_ERROR(EmptyForeground);
SKULLSTRIP_DEFINE_ERROR(TooFewMarkers);
SKULLSTRIP_DEFINE_ERROR(NoCandidateRegion);
SKULLSTRIP_DEFINE_ERROR(EmptyDataset);
SKULLSTRIP_DEFINE_ERROR(NonScalarLoss);
SKULLSTRIP_DEFINE_ERROR(MissingGradient);
SKULLSTRIP_DEFINE_ERROR(IndivisibleInput);
SKULLSTRIP_DEFINE_ERROR(DatasetTooSmall);
SKULLSTRIP_DEFINE_ERROR(VersionMismatch);
SKULLSTRIP_DEFINE_ERROR(CorruptCheckpoint);
SKULLSTRIP_DEFINE_ERROR(EmptyEvaluation);

#undef SKULLSTRIP_DEFINE_ERROR

}  // namespace skullstrip
