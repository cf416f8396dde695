#pragma once

#include <stdexcept>
#include <string>

namespace mergeopt {

enum class ErrorCode {
  // tensorstore
  IoError,
  InvalidTensor,
  BadMagic,
  UnsupportedVersion,
  CorruptHeader,
  TruncatedPayload,
  // merger
  DegenerateWeights,
  ShapeMismatch,
  // cmaes
  InvalidConfig,
  GenerationFull,
  UnknownToken,
  DoubleTell,
  // fitness
  MissingTask,
  EvaluatorCrashed,
  ProtocolError,
  // toylab
  PoolTooLarge,
  GenerationRetriesExhausted,
  // analysis
  LengthMismatch,
  ConstantSeries,
  // driver
  PoolInvalid,
  CorruptLog,
  ConfigMismatch,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

  // Evaluator failures map to CLI exit 3, everything else to 2.
  bool is_evaluator_failure() const {
    return code_ == ErrorCode::EvaluatorCrashed ||
           code_ == ErrorCode::ProtocolError;
  }

 private:
  ErrorCode code_;
};

const char* error_code_name(ErrorCode code);

}  // namespace mergeopt
