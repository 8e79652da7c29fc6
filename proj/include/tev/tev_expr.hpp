#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tev/interp.hpp"
#include "tev/ir.hpp"

namespace tev {

// A recurrence chain {E0, op1, E1, ..., opm, Em} describes a tensor-valued
// sequence over the 0-based loop iteration index i:
//   value(i=0) = E0
//   value(i)   = value(i-1) op1 tail(i-1),  tail = {E1, op2, ..., Em}
// Uniform all-'+' chains are polynomial sequences (value(i) = sum of
// E_j * C(i,j) over binomial coefficients); all-'*' chains are the
// geometric analogue.

enum class ChainOp { Add, Mul };

char chainOpChar(ChainOp op);  // '+' | '*'
BinaryOp chainOpBinary(ChainOp op);

enum class TevKind {
  Invariant,  // loop-invariant expression; same value at every iteration
  Chain,      // recurrence chain
  Unknown,    // unanalyzable variable; infectious
  Wrap,       // an operation no rewrite rule could push into its children
};

enum class WrapKind {
  Reshape,
  Slice,
  Concat,
  Broadcast,
  Log,
  Exp,
  Neg,
  Add,
  Sub,
  Mul,
  Scale,
  Pow,
};

const char* wrapKindName(WrapKind k);

struct TevExpr;
using TevPtr = std::shared_ptr<const TevExpr>;

struct TevExpr {
  TevKind kind{};
  Shape shape;  // every node carries its static shape

  // Invariant
  ExprPtr inv;

  // Chain: operands.size() == ops.size() + 1. Only the final operand may
  // itself be a Chain; normalization flattens it away.
  std::vector<TevPtr> operands;
  std::vector<ChainOp> ops;

  // Unknown
  std::string unknownVar;
  std::string reason;

  // Wrap
  WrapKind wrap{};
  std::vector<TevPtr> children;
  double factor = 0.0;                   // Scale
  std::optional<Shape> target;           // Reshape
  std::optional<std::vector<int>> perm;  // Reshape
  SliceSpec spec;                        // Slice
  int axis = 0;                          // Concat
};

// ----- constructors ---------------------------------------------------------

// The environment supplies shapes for free variables of invariant payloads;
// literal-only expressions work with an empty environment.
TevPtr tevInvariant(ExprPtr e, const ShapeEnv& env = {});

// Trusted-shape variant for contexts (rewrites, operand combines) where the
// shape is already known and the expression may reference variables whose
// shapes are not at hand.
TevPtr tevInvariant(ExprPtr e, Shape shape);

// Raw chain; all operands must share one shape (the final operand may be a
// nested Chain of the same shape). No simplification is applied here.
TevPtr tevChain(std::vector<TevPtr> operands, std::vector<ChainOp> ops);

TevPtr tevUnknown(std::string varName, std::string reason, Shape shape);

TevPtr wrapReshape(TevPtr child, std::optional<Shape> target,
                   std::optional<std::vector<int>> perm);
TevPtr wrapSlice(TevPtr child, SliceSpec spec);
TevPtr wrapConcat(TevPtr a, TevPtr b, int axis);
TevPtr wrapBroadcast(TevPtr child, Shape target);
TevPtr wrapUnary(WrapKind k, TevPtr child);  // Log | Exp | Neg
TevPtr wrapBinary(WrapKind k, TevPtr a, TevPtr b);  // Add | Sub | Mul
TevPtr wrapScale(double factor, TevPtr child);
TevPtr wrapPow(TevPtr base, TevPtr exponent);

// ----- inspection -----------------------------------------------------------

inline bool isInvariant(const TevPtr& t) { return t->kind == TevKind::Invariant; }
inline bool isChain(const TevPtr& t) { return t->kind == TevKind::Chain; }
inline bool isUnknown(const TevPtr& t) { return t->kind == TevKind::Unknown; }
inline bool isWrap(const TevPtr& t) { return t->kind == TevKind::Wrap; }

// True when every chain op equals `op` (flattening into nested final
// operands); false for non-chains.
bool isUniformChain(const TevPtr& t, ChainOp op);

// All ops of a chain including nested final operands; fails on non-chains.
std::vector<ChainOp> chainOpList(const TevPtr& t);

// Number of ops after flattening (0 for invariants).
int chainDepth(const TevPtr& t);

// Chain with nested final operands spliced into one flat operand list.
// Identity on anything that is not a chain-ending-in-chain.
TevPtr flattenChain(const TevPtr& t);

bool tevEqual(const TevPtr& a, const TevPtr& b);

// Brace notation, e.g. "{x, +, a}"; invariants render as their expression.
std::string renderTev(const TevPtr& t);

// ----- semantics ------------------------------------------------------------

// Reference meaning of the expression at iteration i (stepwise; O(i * depth)
// tensor operations). Throws CannotEvaluateUnknown, UnboundParameter via
// the expression evaluator, and DomainError from log.
Tensor evalStep(const TevPtr& t, int64_t i, const Bindings& env);

// Loop-invariant expression for the value at iteration i, for uniform
// chains and invariants: number of tensor ops independent of i.
// Throws MixedOperatorChain for mixed chains, NegativeIndex for i < 0,
// CannotEvaluateUnknown for Unknown operands.
ExprPtr closedFormAt(const TevPtr& t, int64_t i);

// Human-readable closed form with a symbolic iteration variable, e.g.
// "x + C(k,1)*a" for {x, +, a}. Display only.
std::string symbolicClosedForm(const TevPtr& t, const std::string& indexName);

// The sequence shifted by one: advance(t)(i) = t(i+1). For chains this is
// the operand-wise combine E_j' = E_j op_{j+1} E_{j+1}.
TevPtr advance(const TevPtr& t);

// Binomial coefficient C(n, k) as a double; exact whenever the value is
// exactly representable (computed in 128-bit integers, falling back to long
// double beyond that).
double binomialCoefficient(int64_t n, int k);

// Maximum chain depth; products that would exceed it degrade to Unknown.
inline constexpr int kMaxChainDepth = 8;

}  // namespace tev
