#include "tev/error.hpp"

namespace tev {

const char* errorKindName(ErrorKind k) {
  switch (k) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::ElementCountMismatch: return "ElementCountMismatch";
    case ErrorKind::InvalidPermutation: return "InvalidPermutation";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::AxisOutOfRange: return "AxisOutOfRange";
    case ErrorKind::IncompatibleBroadcast: return "IncompatibleBroadcast";
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::DuplicateParam: return "DuplicateParam";
    case ErrorKind::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorKind::EmptyLoopBody: return "EmptyLoopBody";
    case ErrorKind::UnboundParameter: return "UnboundParameter";
    case ErrorKind::UnboundVariable: return "UnboundVariable";
    case ErrorKind::MixedOperatorChain: return "MixedOperatorChain";
    case ErrorKind::NegativeIndex: return "NegativeIndex";
    case ErrorKind::WrongChainOperator: return "WrongChainOperator";
    case ErrorKind::OperatorMismatch: return "OperatorMismatch";
    case ErrorKind::NonAdditiveChain: return "NonAdditiveChain";
    case ErrorKind::NonUniformChain: return "NonUniformChain";
    case ErrorKind::ChainDepthExceeded: return "ChainDepthExceeded";
    case ErrorKind::RewriteBudgetExceeded: return "RewriteBudgetExceeded";
    case ErrorKind::CannotEvaluateUnknown: return "CannotEvaluateUnknown";
    case ErrorKind::SelfReferentialStep: return "SelfReferentialStep";
    case ErrorKind::NoTevAvailable: return "NoTevAvailable";
    case ErrorKind::MixedChainTooLong: return "MixedChainTooLong";
    case ErrorKind::NotFullyAnalyzable: return "NotFullyAnalyzable";
    case ErrorKind::Internal: return "Internal";
  }
  return "Error";
}

}  // namespace tev
