#pragma once

#include "tev/ir.hpp"

namespace tev {

// Canonicalizes a loop-invariant expression:
//   - sums are flattened, like terms collected with exact coefficients,
//     and emitted in a deterministic order (sub/neg become scale(-1, ...));
//   - scale factors distribute over sums and pull out of products;
//   - literals (including zeros/ones) fold under every operator;
//   - structural operators (reshape/transpose/slice/broadcast) distribute
//     over sums, scales, and literals;
//   - pow folds identity exponents (^1, ^0).
// The result is idempotent under re-simplification, and two invariant
// expressions are considered equal exactly when their simplified forms are
// structurally equal. The environment supplies shapes for free variables.
ExprPtr simplifyInvariant(const ExprPtr& e, const ShapeEnv& env);

}  // namespace tev
