#include "mergeopt/errors.hpp"

namespace mergeopt {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidTensor: return "InvalidTensor";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::DegenerateWeights: return "DegenerateWeights";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::GenerationFull: return "GenerationFull";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::DoubleTell: return "DoubleTell";
    case ErrorCode::MissingTask: return "MissingTask";
    case ErrorCode::EvaluatorCrashed: return "EvaluatorCrashed";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::PoolTooLarge: return "PoolTooLarge";
    case ErrorCode::GenerationRetriesExhausted: return "GenerationRetriesExhausted";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ConstantSeries: return "ConstantSeries";
    case ErrorCode::PoolInvalid: return "PoolInvalid";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
  }
  return "Unknown";
}

}  // namespace mergeopt
