#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ktsnn {

// Every failure the library reports carries one of these codes so callers
// (and tests) can branch on the kind without parsing messages.
enum class Errc {
  // events
  BadMagic,
  TruncatedRecord,
  CoordinateOutOfRange,
  NonMonotonicTimestamp,
  ZeroSlices,
  NonPositiveThreshold,
  EmptySequence,
  // numerics
  ShapeMismatch,
  OddExtent,
  LabelOutOfRange,
  NonFinite,
  // snn
  SpecParseError,
  GeometryUnderflow,
  NonFiniteActivation,
  BadCheckpoint,
  // losses
  DegenerateBatch,
  DegenerateFeatures,
  // transfer
  OutOfRangePixel,
  MissingCategory,
  NonFiniteLoss,
  EmptyTestSet,
  InvalidConfig,
  // datasets / io
  IoError,
  MissingFile,
  DecodeError,
  // analysis
  LayerTapInvalid,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Decoding failures also remember where in the input they happened.
class DecodeFailure : public Error {
 public:
  DecodeFailure(Errc code, std::size_t offset, const std::string& what)
      : Error(code, what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace ktsnn
