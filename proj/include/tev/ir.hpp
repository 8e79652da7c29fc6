#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tev/tensor.hpp"

namespace tev {

struct SourceSpan {
  int line = 0;
  int col = 0;
};

// Expression nodes of the loop IR. Immutable after construction and shared
// freely; the same node set doubles as the loop-invariant expression
// language of the evolution algebra.
enum class ExprKind {
  Var,
  Lit,
  Zeros,
  Ones,
  Binary,
  Unary,
  Scale,
  Pow,
  Reshape,
  Slice,
  Concat,
  Broadcast,
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  ExprKind kind{};
  SourceSpan span{};

  std::string var;                      // Var
  Tensor lit;                           // Lit
  Shape shape;                          // Zeros | Ones | Broadcast target
  BinaryOp bop{};                       // Binary
  UnaryOp uop{};                        // Unary
  double factor = 0.0;                  // Scale
  std::optional<Shape> target;          // Reshape target shape
  std::optional<std::vector<int>> perm; // Reshape axis permutation
  SliceSpec spec;                       // Slice
  int axis = 0;                         // Concat
  std::vector<ExprPtr> args;
};

ExprPtr eVar(std::string name, SourceSpan span = {});
ExprPtr eLit(Tensor value, SourceSpan span = {});
ExprPtr eScalar(double value, SourceSpan span = {});
ExprPtr eZeros(Shape shape, SourceSpan span = {});
ExprPtr eOnes(Shape shape, SourceSpan span = {});
ExprPtr eBinary(BinaryOp op, ExprPtr a, ExprPtr b, SourceSpan span = {});
ExprPtr eAdd(ExprPtr a, ExprPtr b);
ExprPtr eSub(ExprPtr a, ExprPtr b);
ExprPtr eMul(ExprPtr a, ExprPtr b);
ExprPtr eUnary(UnaryOp op, ExprPtr a, SourceSpan span = {});
ExprPtr eNeg(ExprPtr a);
ExprPtr eLog(ExprPtr a);
ExprPtr eExp(ExprPtr a);
ExprPtr eScale(double factor, ExprPtr a, SourceSpan span = {});
ExprPtr ePow(ExprPtr base, ExprPtr exponent, SourceSpan span = {});
ExprPtr eReshape(ExprPtr a, Shape targetShape, SourceSpan span = {});
ExprPtr eTranspose(ExprPtr a, std::vector<int> perm, SourceSpan span = {});
ExprPtr eReshapePerm(ExprPtr a, std::optional<Shape> targetShape,
                     std::optional<std::vector<int>> perm, SourceSpan span = {});
ExprPtr eSlice(ExprPtr a, SliceSpec spec, SourceSpan span = {});
ExprPtr eConcat(ExprPtr a, ExprPtr b, int axis, SourceSpan span = {});
ExprPtr eBroadcast(ExprPtr a, Shape targetShape, SourceSpan span = {});

struct Stmt {
  std::string name;
  ExprPtr value;
  SourceSpan span{};
};

struct Loop {
  std::string counter;
  int64_t tripCount = 0;
  std::vector<Stmt> body;
  SourceSpan span{};
};

struct Param {
  std::string name;
  Shape shape;
  SourceSpan span{};
};

// One straight-line program with at most one loop. The loop is optional so
// that optimized (loop-free) programs remain representable and re-parseable.
struct LoopProgram {
  std::string name;
  std::vector<Param> params;
  std::vector<Stmt> preStmts;
  std::optional<Loop> loop;
  std::vector<Stmt> postStmts;
  std::vector<std::string> returns;
};

// Structural comparison ignoring source spans.
bool structurallyEqual(const ExprPtr& a, const ExprPtr& b);
bool structurallyEqual(const LoopProgram& a, const LoopProgram& b);

// For Lit/Zeros/Ones nodes, the denoted tensor value.
std::optional<Tensor> litValueOf(const Expr& e);

using ShapeEnv = std::map<std::string, Shape>;

// Static shape of an expression; throws Error on any inconsistency.
Shape inferShape(const ExprPtr& e, const ShapeEnv& env);

void collectVars(const ExprPtr& e, std::set<std::string>& out);
bool referencesVar(const ExprPtr& e, const std::string& name);

// Shapes of every named value in a valid program (params, pre-loop, body,
// post-loop; the loop counter maps to the scalar shape).
ShapeEnv programShapes(const LoopProgram& p);

// Variables assigned in the loop body whose value crosses the back edge:
// some body statement reads them at or before their first body assignment.
// Order follows first assignment in the body.
std::vector<std::string> loopCarriedVars(const LoopProgram& p);

struct Diagnostic {
  SourceSpan span{};
  std::string code;
  std::string message;
};

// Full static checking: name availability, single assignment outside the
// loop body, shape consistency of every expression, slice/concat/broadcast
// validity, loop-invariance of pow bases. Empty result = valid.
std::vector<Diagnostic> validateProgram(const LoopProgram& p);

}  // namespace tev
