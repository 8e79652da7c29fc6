#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tev/simplify.hpp"
#include "tev/tev_expr.hpp"

namespace tev {

// One rule application. Renderings are of the whole expression, so a trace
// replays as an equality chain: steps[0].before is the initial expression,
// each step's after equals the next step's before, and the last after is
// the final expression.
struct RewriteStep {
  std::string rule;
  std::string before;
  std::string after;
};

struct RewriteTrace {
  std::vector<RewriteStep> steps;
};

// Hard cap on rule applications per normalize call; exceeding it signals a
// non-terminating rule bug (RewriteBudgetExceeded).
inline constexpr int kRewriteBudget = 10000;

// ----- single rules ---------------------------------------------------------
// Each returns the rewritten expression or throws when its precondition
// fails (the normalizer treats a throw as "rule not applicable" and keeps
// the surrounding wrap). The environment supplies variable shapes for
// operand simplification.

// K + {A, +, tau} => {K + A, +, tau}; head operator must be '+'.
TevPtr addInvariant(const ExprPtr& k, const TevPtr& chain, const ShapeEnv& env = {});

// K * {A, +, tau} => {K*A, +, K*tau}: distributes through an all-'+' chain.
TevPtr mulInvariant(const ExprPtr& k, const TevPtr& chain, const ShapeEnv& env = {});

// scale(f, chain): the scalar special case of mulInvariant.
TevPtr scaleChain(double factor, const TevPtr& chain, const ShapeEnv& env = {});

// {A,+,tau1} + {B,+,tau2} => {A+B, +, tau1+tau2}; the shorter side is
// zero-padded. Throws NonAdditiveChain when either side is not all-'+'.
TevPtr tevAdd(const TevPtr& a, const TevPtr& b, const ShapeEnv& env = {});

// Recurrence product of two all-'+' chains with loop-invariant operands;
// result depth is the sum of the input depths. Depths beyond kMaxChainDepth
// degrade to Unknown.
TevPtr tevMul(const TevPtr& a, const TevPtr& b, const ShapeEnv& env = {});

// Structural operators distribute over the operands of a uniform-operator
// chain (they commute with element-wise ops). Throw NonUniformChain on
// mixed chains.
TevPtr pushReshape(const TevPtr& chain, const std::optional<Shape>& target,
                   const std::optional<std::vector<int>>& perm, const ShapeEnv& env = {});
TevPtr pushSlice(const TevPtr& chain, const SliceSpec& spec, const ShapeEnv& env = {});
TevPtr pushBroadcast(const TevPtr& chain, const Shape& target, const ShapeEnv& env = {});

// Operand-wise concatenation: requires identical operator lists after
// padding ('+' levels pad with zeros, '*' levels with ones). Throws
// OperatorMismatch when the operator lists differ.
TevPtr concatChains(const TevPtr& a, const TevPtr& b, int axis, const ShapeEnv& env = {});

// log(all-'*' chain) => all-'+' chain of logs; exp(all-'+') => all-'*' of
// exps. Throws WrongChainOperator.
TevPtr logChain(const TevPtr& chain, const ShapeEnv& env = {});
TevPtr expChain(const TevPtr& chain, const ShapeEnv& env = {});

// c ^ {a, +, b} => {c^a, *, c^b} for a loop-invariant base.
TevPtr powConstBase(const ExprPtr& base, const TevPtr& chain, const ShapeEnv& env = {});

// The loop-carried constructor: value after i applications of
// v <- v op step(j), j = 0..i-1, starting from init. A chain step is
// spliced in flat; an Unknown step stays Unknown; exceeding the depth cap
// degrades to Unknown.
TevPtr inject(const TevPtr& step, const ExprPtr& init, ChainOp op, const ShapeEnv& env = {});

// ----- normalization --------------------------------------------------------

// Applies the rule set innermost-first to a fixed point. Never throws for
// un-rewritable content (wraps and Unknowns persist); throws
// RewriteBudgetExceeded past the application cap.
std::pair<TevPtr, RewriteTrace> normalize(const TevPtr& t, const ShapeEnv& env = {});

// True when no rule applies anywhere in the expression (normalize would
// return it unchanged).
bool isFullyRewritten(const TevPtr& t, const ShapeEnv& env = {});

// Structural well-formedness of chains: operand/op arity, flattenedness
// (chains only in final operand position, and none after normalization),
// and one shared operand shape.
bool chainInvariantsHold(const TevPtr& t);

}  // namespace tev
