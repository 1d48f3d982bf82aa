#pragma once

#include <stdexcept>
#include <string>

namespace skyreg {

// Base type for all toolkit errors. Subtypes are thrown where the module
// contracts name them, so callers can catch either the specific failure or
// everything skyreg-related at once.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define SKYREG_DEFINE_ERROR(NAME)                                   \
  struct NAME : Error {                                             \
    explicit NAME(const std::string& msg) : Error(#NAME ": " + msg) {} \
  }

// geometry
SKYREG_DEFINE_ERROR(DegenerateCorrespondence);
SKYREG_DEFINE_ERROR(DivergentPoint);

// ingest
SKYREG_DEFINE_ERROR(DecodeFailure);
SKYREG_DEFINE_ERROR(EmptyVideo);
SKYREG_DEFINE_ERROR(FrameRangeError);
SKYREG_DEFINE_ERROR(OutOfBounds);

// network
SKYREG_DEFINE_ERROR(ShapeMismatch);
SKYREG_DEFINE_ERROR(StateVariantMismatch);
SKYREG_DEFINE_ERROR(UnknownLayer);

// trainer
SKYREG_DEFINE_ERROR(DatasetEmpty);
SKYREG_DEFINE_ERROR(CheckpointIncompatible);
SKYREG_DEFINE_ERROR(CorruptCheckpoint);

// baselines
SKYREG_DEFINE_ERROR(InsufficientFeatures);
SKYREG_DEFINE_ERROR(NoConsensus);

// evaluation
SKYREG_DEFINE_ERROR(MissingPrediction);
SKYREG_DEFINE_ERROR(ParseError);

// stitcher
SKYREG_DEFINE_ERROR(CanvasTooLarge);

// synthetic
SKYREG_DEFINE_ERROR(FootprintOverflow);

#undef SKYREG_DEFINE_ERROR

}  // namespace skyreg
