#pragma once

#include <stdexcept>
#include <string>

namespace tev {

enum class ErrorKind {
  // tensor-core
  ShapeMismatch,
  DomainError,
  ElementCountMismatch,
  InvalidPermutation,
  OutOfBounds,
  AxisOutOfRange,
  IncompatibleBroadcast,
  // loop-ir / parser
  SyntaxError,
  DuplicateParam,
  UnknownIdentifier,
  EmptyLoopBody,
  // interpreter
  UnboundParameter,
  UnboundVariable,
  // tev-expr
  MixedOperatorChain,
  NegativeIndex,
  WrongChainOperator,
  OperatorMismatch,
  NonAdditiveChain,
  NonUniformChain,
  ChainDepthExceeded,
  RewriteBudgetExceeded,
  CannotEvaluateUnknown,
  // analysis / codegen
  SelfReferentialStep,
  NoTevAvailable,
  MixedChainTooLong,
  NotFullyAnalyzable,
  Internal,
};

const char* errorKindName(ErrorKind k);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(errorKindName(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace tev
