#include "ktsnn/error.hpp"

namespace ktsnn {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::TruncatedRecord: return "TruncatedRecord";
    case Errc::CoordinateOutOfRange: return "CoordinateOutOfRange";
    case Errc::NonMonotonicTimestamp: return "NonMonotonicTimestamp";
    case Errc::ZeroSlices: return "ZeroSlices";
    case Errc::NonPositiveThreshold: return "NonPositiveThreshold";
    case Errc::EmptySequence: return "EmptySequence";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::OddExtent: return "OddExtent";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::NonFinite: return "NonFinite";
    case Errc::SpecParseError: return "SpecParseError";
    case Errc::GeometryUnderflow: return "GeometryUnderflow";
    case Errc::NonFiniteActivation: return "NonFiniteActivation";
    case Errc::BadCheckpoint: return "BadCheckpoint";
    case Errc::DegenerateBatch: return "DegenerateBatch";
    case Errc::DegenerateFeatures: return "DegenerateFeatures";
    case Errc::OutOfRangePixel: return "OutOfRangePixel";
    case Errc::MissingCategory: return "MissingCategory";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyTestSet: return "EmptyTestSet";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::IoError: return "IoError";
    case Errc::MissingFile: return "MissingFile";
    case Errc::DecodeError: return "DecodeError";
    case Errc::LayerTapInvalid: return "LayerTapInvalid";
  }
  return "Unknown";
}

}  // namespace ktsnn
