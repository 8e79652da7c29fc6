#include "tev/rewrite.hpp"

#include <algorithm>
#include <optional>
#include <utility>

#include "tev/error.hpp"
#include "tev/print.hpp"

namespace tev {

namespace {

// Simplify a combined invariant payload. Shapes for free variables may be
// missing from the environment (rules are usable without one); in that case
// keep the raw combination, which is semantically identical.
ExprPtr tidy(const ExprPtr& e, const ShapeEnv& env) {
  try {
    return simplifyInvariant(e, env);
  } catch (const Error&) {
    return e;
  }
}

TevPtr inv(ExprPtr e, const Shape& shape) { return tevInvariant(std::move(e), shape); }

// Identity element for one chain level: zeros for '+', ones for '*'.
TevPtr levelIdentity(ChainOp op, const Shape& shape) {
  if (shape.rank() == 0) {
    return inv(eScalar(op == ChainOp::Add ? 0.0 : 1.0), shape);
  }
  return inv(op == ChainOp::Add ? eZeros(shape) : eOnes(shape), shape);
}

// When the environment can infer the expression's shape, enforce that it
// matches; silently trust the caller otherwise.
void checkShapeAgainst(const ExprPtr& e, const ShapeEnv& env, const Shape& want,
                       const char* what) {
  std::optional<Shape> got;
  try {
    got = inferShape(e, env);
  } catch (const Error&) {
    return;
  }
  if (*got != want) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": expression has shape " +
                                       got->str() + " but the chain has shape " + want.str());
  }
}

struct FlatChain {
  std::vector<TevPtr> operands;
  std::vector<ChainOp> ops;
};

FlatChain flatView(const TevPtr& t) {
  TevPtr f = flattenChain(t);
  return {f->operands, f->ops};
}

bool allOps(const std::vector<ChainOp>& ops, ChainOp op) {
  return std::all_of(ops.begin(), ops.end(), [op](ChainOp o) { return o == op; });
}

void requireAdditive(const FlatChain& c, const char* who) {
  if (!allOps(c.ops, ChainOp::Add)) {
    fail(ErrorKind::NonAdditiveChain,
         std::string(who) + " requires an all-'+' chain; found a '*' level");
  }
}

// Pairwise operand combine for additive chain addition: invariants merge
// into one expression; a non-invariant operand is only legal in the final
// slot, where the sum stays symbolic as an Add wrap.
TevPtr addOperands(const TevPtr& x, const TevPtr& y, bool finalSlot, const ShapeEnv& env) {
  if (isInvariant(x) && isInvariant(y)) {
    return inv(tidy(eAdd(x->inv, y->inv), env), x->shape);
  }
  if (!finalSlot) {
    fail(ErrorKind::NonAdditiveChain,
         "cannot combine non-invariant operands before the final chain level");
  }
  return wrapBinary(WrapKind::Add, x, y);
}

// Multiply one chain operand by a loop-invariant expression.
TevPtr mulOperand(const ExprPtr& k, const TevPtr& operand, const ShapeEnv& env) {
  if (isInvariant(operand)) {
    return inv(tidy(eMul(k, operand->inv), env), operand->shape);
  }
  return wrapBinary(WrapKind::Mul, inv(k, operand->shape), operand);
}

// Tail of a flattened chain as its own expression: {E1, op2, ..., Em}, or
// the lone operand E1 when the chain has depth 1.
TevPtr tailOf(const FlatChain& c) {
  if (c.ops.size() == 1) return c.operands[1];
  return tevChain(std::vector<TevPtr>(c.operands.begin() + 1, c.operands.end()),
                  std::vector<ChainOp>(c.ops.begin() + 1, c.ops.end()));
}

}  // namespace

TevPtr addInvariant(const ExprPtr& k, const TevPtr& chain, const ShapeEnv& env) {
  if (!isChain(chain)) {
    fail(ErrorKind::WrongChainOperator, "addInvariant expects a chain operand");
  }
  FlatChain c = flatView(chain);
  if (c.ops.front() != ChainOp::Add) {
    fail(ErrorKind::WrongChainOperator,
         "addInvariant requires a '+' head operator; the head is '*'");
  }
  if (!isInvariant(c.operands.front())) {
    fail(ErrorKind::NonAdditiveChain, "chain head operand is not loop-invariant");
  }
  checkShapeAgainst(k, env, chain->shape, "addInvariant");
  std::vector<TevPtr> operands = c.operands;
  operands[0] = inv(tidy(eAdd(k, c.operands[0]->inv), env), chain->shape);
  return tevChain(std::move(operands), c.ops);
}

TevPtr mulInvariant(const ExprPtr& k, const TevPtr& chain, const ShapeEnv& env) {
  if (!isChain(chain)) {
    fail(ErrorKind::WrongChainOperator, "mulInvariant expects a chain operand");
  }
  FlatChain c = flatView(chain);
  requireAdditive(c, "mulInvariant");
  checkShapeAgainst(k, env, chain->shape, "mulInvariant");
  std::vector<TevPtr> operands;
  operands.reserve(c.operands.size());
  for (const TevPtr& e : c.operands) operands.push_back(mulOperand(k, e, env));
  return tevChain(std::move(operands), c.ops);
}

TevPtr scaleChain(double factor, const TevPtr& chain, const ShapeEnv& env) {
  if (!isChain(chain)) {
    fail(ErrorKind::WrongChainOperator, "scaleChain expects a chain operand");
  }
  FlatChain c = flatView(chain);
  requireAdditive(c, "scaleChain");
  std::vector<TevPtr> operands;
  operands.reserve(c.operands.size());
  for (const TevPtr& e : c.operands) {
    if (isInvariant(e)) {
      operands.push_back(inv(tidy(eScale(factor, e->inv), env), e->shape));
    } else {
      operands.push_back(wrapScale(factor, e));
    }
  }
  return tevChain(std::move(operands), c.ops);
}

TevPtr tevAdd(const TevPtr& a, const TevPtr& b, const ShapeEnv& env) {
  if (isUnknown(a)) return a;
  if (isUnknown(b)) return b;
  if (a->shape != b->shape) {
    fail(ErrorKind::ShapeMismatch, "tevAdd: operand shapes " + a->shape.str() + " and " +
                                       b->shape.str() + " differ");
  }
  if (isInvariant(a) && isInvariant(b)) {
    return inv(tidy(eAdd(a->inv, b->inv), env), a->shape);
  }
  if (isInvariant(a) && isChain(b)) {
    FlatChain c = flatView(b);
    if (c.ops.front() != ChainOp::Add) {
      fail(ErrorKind::NonAdditiveChain, "tevAdd: chain head operator is '*'");
    }
    return addInvariant(a->inv, b, env);
  }
  if (isChain(a) && isInvariant(b)) return tevAdd(b, a, env);
  if (!isChain(a) || !isChain(b)) {
    fail(ErrorKind::NonAdditiveChain, "tevAdd handles invariants and all-'+' chains only");
  }

  FlatChain fa = flatView(a);
  FlatChain fb = flatView(b);
  requireAdditive(fa, "tevAdd");
  requireAdditive(fb, "tevAdd");

  // Zero-pad the shorter chain; only legal when its final operand is
  // loop-invariant (a symbolic tail has no finite-depth extension).
  auto pad = [&](FlatChain& c, size_t depth) {
    if (!isInvariant(c.operands.back())) {
      fail(ErrorKind::NonAdditiveChain,
           "tevAdd: cannot zero-pad a chain whose final operand is not loop-invariant");
    }
    while (c.ops.size() < depth) {
      c.operands.push_back(levelIdentity(ChainOp::Add, a->shape));
      c.ops.push_back(ChainOp::Add);
    }
  };
  size_t depth = std::max(fa.ops.size(), fb.ops.size());
  pad(fa, depth);
  pad(fb, depth);

  std::vector<TevPtr> operands;
  operands.reserve(depth + 1);
  for (size_t j = 0; j <= depth; ++j) {
    operands.push_back(addOperands(fa.operands[j], fb.operands[j], j == depth, env));
  }
  return tevChain(std::move(operands), fa.ops);
}

TevPtr tevMul(const TevPtr& a, const TevPtr& b, const ShapeEnv& env) {
  if (isUnknown(a)) return a;
  if (isUnknown(b)) return b;
  if (a->shape != b->shape) {
    fail(ErrorKind::ShapeMismatch, "tevMul: operand shapes " + a->shape.str() + " and " +
                                       b->shape.str() + " differ");
  }
  if (isInvariant(a) && isInvariant(b)) {
    return inv(tidy(eMul(a->inv, b->inv), env), a->shape);
  }
  if (isInvariant(a) && isChain(b)) return mulInvariant(a->inv, b, env);
  if (isChain(a) && isInvariant(b)) return mulInvariant(b->inv, a, env);
  if (!isChain(a) || !isChain(b)) {
    fail(ErrorKind::NonAdditiveChain, "tevMul handles invariants and all-'+' chains only");
  }

  FlatChain fa = flatView(a);
  FlatChain fb = flatView(b);
  requireAdditive(fa, "tevMul");
  requireAdditive(fb, "tevMul");
  auto allInvariant = [](const FlatChain& c) {
    return std::all_of(c.operands.begin(), c.operands.end(),
                       [](const TevPtr& o) { return isInvariant(o); });
  };
  if (!allInvariant(fa) || !allInvariant(fb)) {
    fail(ErrorKind::NonAdditiveChain,
         "tevMul requires loop-invariant operands on both chains");
  }

  int depth = static_cast<int>(fa.ops.size() + fb.ops.size());
  if (depth > kMaxChainDepth) {
    return tevUnknown("", "product chain depth " + std::to_string(depth) +
                              " exceeds the cap of " + std::to_string(kMaxChainDepth),
                      a->shape);
  }

  // Product rule for additive recurrences: with f = {A, +, f1} and
  // g = {C, +, g1} (f1, g1 the tail sequences),
  //   (f*g)(0)   = A*C
  //   step(i)    = f(i)*g1(i) + g(i)*f1(i) + f1(i)*g1(i)
  // and the step is itself a sum of chain products of strictly smaller
  // combined depth, so the recursion terminates.
  TevPtr f1 = tailOf(fa);
  TevPtr g1 = tailOf(fb);
  ExprPtr head = tidy(eMul(fa.operands[0]->inv, fb.operands[0]->inv), env);
  TevPtr step = tevAdd(tevAdd(tevMul(a, g1, env), tevMul(b, f1, env), env),
                       tevMul(f1, g1, env), env);
  if (isUnknown(step)) return step;
  return flattenChain(tevChain({inv(head, a->shape), step}, {ChainOp::Add}));
}

namespace {

// Operand-wise distribution of a structural operation over a uniform chain.
// `applyInv` builds the new invariant payload; `applyWrap` wraps a
// non-invariant (final-slot) operand symbolically.
template <typename FInv, typename FWrap>
TevPtr pushOver(const TevPtr& chain, const Shape& resultShape, const char* who, FInv applyInv,
                FWrap applyWrap, const ShapeEnv& env) {
  if (!isChain(chain)) {
    fail(ErrorKind::NonUniformChain, std::string(who) + " expects a chain operand");
  }
  FlatChain c = flatView(chain);
  if (!allOps(c.ops, c.ops.front())) {
    fail(ErrorKind::NonUniformChain,
         std::string(who) + " requires a uniform-operator chain; the chain mixes '+' and '*'");
  }
  std::vector<TevPtr> operands;
  operands.reserve(c.operands.size());
  for (const TevPtr& o : c.operands) {
    if (isInvariant(o)) {
      operands.push_back(inv(tidy(applyInv(o->inv), env), resultShape));
    } else {
      operands.push_back(applyWrap(o));
    }
  }
  return tevChain(std::move(operands), c.ops);
}

}  // namespace

TevPtr pushReshape(const TevPtr& chain, const std::optional<Shape>& target,
                   const std::optional<std::vector<int>>& perm, const ShapeEnv& env) {
  // Same result-shape computation as the wrap constructor: the permutation
  // reorders the axes first, then the target reinterprets the element count.
  Shape out = chain->shape;
  if (perm) {
    (void)reshapeResultShape(out, out, &*perm);  // validates the permutation
    std::vector<int64_t> dims(perm->size());
    for (size_t i = 0; i < perm->size(); ++i) dims[i] = out.extent((*perm)[i]);
    out = Shape{std::move(dims)};
  }
  out = reshapeResultShape(chain->shape, target.value_or(out), nullptr);
  return pushOver(
      chain, out, "pushReshape",
      [&](const ExprPtr& p) { return eReshapePerm(p, target, perm); },
      [&](const TevPtr& o) { return wrapReshape(o, target, perm); }, env);
}

TevPtr pushSlice(const TevPtr& chain, const SliceSpec& spec, const ShapeEnv& env) {
  Shape out = sliceResultShape(chain->shape, spec);
  return pushOver(
      chain, out, "pushSlice", [&](const ExprPtr& p) { return eSlice(p, spec); },
      [&](const TevPtr& o) { return wrapSlice(o, spec); }, env);
}

TevPtr pushBroadcast(const TevPtr& chain, const Shape& target, const ShapeEnv& env) {
  if (!broadcastCompatible(chain->shape, target)) {
    fail(ErrorKind::IncompatibleBroadcast, "pushBroadcast: cannot broadcast " +
                                               chain->shape.str() + " to " + target.str());
  }
  return pushOver(
      chain, target, "pushBroadcast", [&](const ExprPtr& p) { return eBroadcast(p, target); },
      [&](const TevPtr& o) { return wrapBroadcast(o, target); }, env);
}

TevPtr concatChains(const TevPtr& a, const TevPtr& b, int axis, const ShapeEnv& env) {
  if (isUnknown(a)) return a;
  if (isUnknown(b)) return b;
  if (isInvariant(a) && isInvariant(b)) {
    return inv(tidy(eConcat(a->inv, b->inv, axis), env),
               concatResultShape(a->shape, b->shape, axis));
  }

  // View both sides as flat operand/op lists; an invariant is a depth-0
  // chain that will be padded below.
  auto asFlat = [](const TevPtr& t) -> FlatChain {
    if (isChain(t)) return flatView(t);
    return {{t}, {}};
  };
  FlatChain fa = asFlat(a);
  FlatChain fb = asFlat(b);

  // Pad the shorter operator list with per-level identities (zeros for a
  // '+' level, ones for a '*' level): the padded operand never changes the
  // running value, so the sequence is unchanged. The final operand must be
  // loop-invariant for padding to be meaningful.
  auto padTo = [](FlatChain& shorter, const std::vector<ChainOp>& ops, const Shape& shape) {
    if (shorter.ops.size() == ops.size()) return;
    if (!isInvariant(shorter.operands.back())) {
      fail(ErrorKind::OperatorMismatch,
           "concatChains: cannot pad a chain whose final operand is not loop-invariant");
    }
    for (size_t j = shorter.ops.size(); j < ops.size(); ++j) {
      shorter.operands.push_back(levelIdentity(ops[j], shape));
      shorter.ops.push_back(ops[j]);
    }
  };
  if (fa.ops.size() < fb.ops.size()) {
    padTo(fa, fb.ops, a->shape);
  } else if (fb.ops.size() < fa.ops.size()) {
    padTo(fb, fa.ops, b->shape);
  }
  if (fa.ops != fb.ops) {
    fail(ErrorKind::OperatorMismatch,
         "concatChains requires identical operator lists after padding");
  }

  Shape out = concatResultShape(a->shape, b->shape, axis);
  std::vector<TevPtr> operands;
  operands.reserve(fa.operands.size());
  for (size_t j = 0; j < fa.operands.size(); ++j) {
    const TevPtr& x = fa.operands[j];
    const TevPtr& y = fb.operands[j];
    if (isInvariant(x) && isInvariant(y)) {
      operands.push_back(inv(tidy(eConcat(x->inv, y->inv, axis), env), out));
    } else if (j + 1 == fa.operands.size()) {
      operands.push_back(wrapConcat(x, y, axis));
    } else {
      fail(ErrorKind::OperatorMismatch,
           "concatChains: non-invariant operand before the final chain level");
    }
  }
  return tevChain(std::move(operands), fa.ops);
}

namespace {

// Shared body of the log/exp chain rules: map every operand through a
// unary operation and flip the chain operator.
TevPtr mapUnaryOver(const TevPtr& chain, ChainOp require, ChainOp produce, WrapKind unary,
                    const char* who, const ShapeEnv& env) {
  if (!isChain(chain)) {
    fail(ErrorKind::WrongChainOperator, std::string(who) + " expects a chain operand");
  }
  FlatChain c = flatView(chain);
  if (!allOps(c.ops, require)) {
    fail(ErrorKind::WrongChainOperator,
         std::string(who) + " requires an all-'" + std::string(1, chainOpChar(require)) +
             "' chain");
  }
  std::vector<TevPtr> operands;
  operands.reserve(c.operands.size());
  for (const TevPtr& o : c.operands) {
    if (isInvariant(o)) {
      ExprPtr payload = unary == WrapKind::Log ? eLog(o->inv) : eExp(o->inv);
      operands.push_back(inv(tidy(payload, env), o->shape));
    } else {
      operands.push_back(wrapUnary(unary, o));
    }
  }
  return tevChain(std::move(operands), std::vector<ChainOp>(c.ops.size(), produce));
}

}  // namespace

TevPtr logChain(const TevPtr& chain, const ShapeEnv& env) {
  // log turns products into sums: log applied to {A, *, B, *, ...} is
  // {log A, +, log B, +, ...} because the closed forms are Prod E_j^C(i,j)
  // and Sum log(E_j)*C(i,j).
  return mapUnaryOver(chain, ChainOp::Mul, ChainOp::Add, WrapKind::Log, "logChain", env);
}

TevPtr expChain(const TevPtr& chain, const ShapeEnv& env) {
  return mapUnaryOver(chain, ChainOp::Add, ChainOp::Mul, WrapKind::Exp, "expChain", env);
}

TevPtr powConstBase(const ExprPtr& base, const TevPtr& chain, const ShapeEnv& env) {
  if (!isChain(chain)) {
    fail(ErrorKind::NonAdditiveChain, "powConstBase expects a chain exponent");
  }
  FlatChain c = flatView(chain);
  requireAdditive(c, "powConstBase");
  checkShapeAgainst(base, env, chain->shape, "powConstBase");
  // c ^ (Sum E_j*C(i,j)) = Prod (c^E_j)^C(i,j): operand-wise pow, with the
  // chain operator flipped to '*'.
  std::vector<TevPtr> operands;
  operands.reserve(c.operands.size());
  for (const TevPtr& o : c.operands) {
    if (isInvariant(o)) {
      operands.push_back(inv(tidy(ePow(base, o->inv), env), o->shape));
    } else {
      operands.push_back(wrapPow(inv(base, o->shape), o));
    }
  }
  return tevChain(std::move(operands), std::vector<ChainOp>(c.ops.size(), ChainOp::Mul));
}

TevPtr inject(const TevPtr& step, const ExprPtr& init, ChainOp op, const ShapeEnv& env) {
  if (isUnknown(step)) {
    return tevUnknown(step->unknownVar, "step value is unknown: " + step->reason, step->shape);
  }
  checkShapeAgainst(init, env, step->shape, "inject");
  std::vector<TevPtr> operands{inv(init, step->shape)};
  std::vector<ChainOp> ops{op};
  if (isChain(step)) {
    FlatChain c = flatView(step);
    operands.insert(operands.end(), c.operands.begin(), c.operands.end());
    ops.insert(ops.end(), c.ops.begin(), c.ops.end());
  } else {
    operands.push_back(step);
  }
  if (static_cast<int>(ops.size()) > kMaxChainDepth) {
    return tevUnknown("", "injected chain depth " + std::to_string(ops.size()) +
                              " exceeds the cap of " + std::to_string(kMaxChainDepth),
                      step->shape);
  }
  return tevChain(std::move(operands), std::move(ops));
}

// ----- normalization --------------------------------------------------------

namespace {

// Rebuilds a wrap node with new children, re-running the constructors'
// shape checks.
TevPtr remakeWrap(const TevExpr& n, std::vector<TevPtr> kids) {
  switch (n.wrap) {
    case WrapKind::Reshape: return wrapReshape(kids[0], n.target, n.perm);
    case WrapKind::Slice: return wrapSlice(kids[0], n.spec);
    case WrapKind::Concat: return wrapConcat(kids[0], kids[1], n.axis);
    case WrapKind::Broadcast: return wrapBroadcast(kids[0], n.shape);
    case WrapKind::Log:
    case WrapKind::Exp:
    case WrapKind::Neg: return wrapUnary(n.wrap, kids[0]);
    case WrapKind::Add:
    case WrapKind::Sub:
    case WrapKind::Mul: return wrapBinary(n.wrap, kids[0], kids[1]);
    case WrapKind::Scale: return wrapScale(n.factor, kids[0]);
    case WrapKind::Pow: return wrapPow(kids[0], kids[1]);
  }
  fail(ErrorKind::Internal, "remakeWrap: unhandled wrap kind");
}

// The invariant payload a wrap folds to when all children are invariant.
ExprPtr foldPayload(const TevExpr& n) {
  const auto& c = n.children;
  switch (n.wrap) {
    case WrapKind::Reshape: return eReshapePerm(c[0]->inv, n.target, n.perm);
    case WrapKind::Slice: return eSlice(c[0]->inv, n.spec);
    case WrapKind::Concat: return eConcat(c[0]->inv, c[1]->inv, n.axis);
    case WrapKind::Broadcast: return eBroadcast(c[0]->inv, n.shape);
    case WrapKind::Log: return eLog(c[0]->inv);
    case WrapKind::Exp: return eExp(c[0]->inv);
    case WrapKind::Neg: return eNeg(c[0]->inv);
    case WrapKind::Add: return eAdd(c[0]->inv, c[1]->inv);
    case WrapKind::Sub: return eSub(c[0]->inv, c[1]->inv);
    case WrapKind::Mul: return eMul(c[0]->inv, c[1]->inv);
    case WrapKind::Scale: return eScale(n.factor, c[0]->inv);
    case WrapKind::Pow: return ePow(c[0]->inv, c[1]->inv);
  }
  fail(ErrorKind::Internal, "foldPayload: unhandled wrap kind");
}

// One innermost-first rule application. `visit` returns the rewritten whole
// subtree when some rule fired inside it and records the rule name.
struct Normalizer {
  const ShapeEnv& env;
  std::string rule;

  std::optional<TevPtr> visit(const TevPtr& n) {
    if (isChain(n)) {
      for (size_t j = 0; j < n->operands.size(); ++j) {
        if (auto r = visit(n->operands[j])) {
          std::vector<TevPtr> operands = n->operands;
          operands[j] = *r;
          return tevChain(std::move(operands), n->ops);
        }
      }
      return local(n);
    }
    if (isWrap(n)) {
      for (size_t j = 0; j < n->children.size(); ++j) {
        if (auto r = visit(n->children[j])) {
          std::vector<TevPtr> kids = n->children;
          kids[j] = *r;
          return remakeWrap(*n, std::move(kids));
        }
      }
      return local(n);
    }
    return std::nullopt;  // Invariant | Unknown: nothing to do
  }

  std::optional<TevPtr> local(const TevPtr& n) {
    if (isChain(n)) return localChain(n);
    return localWrap(n);
  }

  std::optional<TevPtr> localChain(const TevPtr& n) {
    for (const TevPtr& o : n->operands) {
      if (isUnknown(o)) {
        rule = "unknown-propagate";
        return tevUnknown(o->unknownVar, o->reason, n->shape);
      }
    }
    if (isChain(n->operands.back())) {
      rule = "flatten-chain";
      return flattenChain(n);
    }
    return std::nullopt;
  }

  // Tries a rule appropriate for the wrap kind; a throwing precondition
  // means "not applicable" and leaves the wrap in place.
  std::optional<TevPtr> localWrap(const TevPtr& n) {
    for (const TevPtr& c : n->children) {
      if (isUnknown(c)) {
        rule = "unknown-propagate";
        return tevUnknown(c->unknownVar, c->reason, n->shape);
      }
    }
    bool allInv = std::all_of(n->children.begin(), n->children.end(),
                              [](const TevPtr& c) { return isInvariant(c); });
    if (allInv) {
      rule = "fold-invariant";
      return inv(tidy(foldPayload(*n), env), n->shape);
    }

    auto attempt = [&](const char* name, auto&& fn) -> std::optional<TevPtr> {
      try {
        TevPtr out = fn();
        rule = name;
        return out;
      } catch (const Error&) {
        return std::nullopt;
      }
    };
    const auto& c = n->children;
    switch (n->wrap) {
      case WrapKind::Sub:
        rule = "sub-as-add-of-neg";
        return wrapBinary(WrapKind::Add, c[0], wrapUnary(WrapKind::Neg, c[1]));
      case WrapKind::Neg:
        if (isChain(c[0])) {
          return attempt("neg-distribute", [&] { return scaleChain(-1.0, c[0], env); });
        }
        return std::nullopt;
      case WrapKind::Add:
        if (isInvariant(c[0]) && isChain(c[1])) {
          return attempt("add-invariant", [&] { return addInvariant(c[0]->inv, c[1], env); });
        }
        if (isChain(c[0]) && isInvariant(c[1])) {
          return attempt("add-invariant", [&] { return addInvariant(c[1]->inv, c[0], env); });
        }
        if (isChain(c[0]) && isChain(c[1])) {
          return attempt("add-chains", [&] { return tevAdd(c[0], c[1], env); });
        }
        return std::nullopt;
      case WrapKind::Mul:
        if (isInvariant(c[0]) && isChain(c[1])) {
          return attempt("mul-invariant", [&] { return mulInvariant(c[0]->inv, c[1], env); });
        }
        if (isChain(c[0]) && isInvariant(c[1])) {
          return attempt("mul-invariant", [&] { return mulInvariant(c[1]->inv, c[0], env); });
        }
        if (isChain(c[0]) && isChain(c[1])) {
          return attempt("mul-chains", [&] { return tevMul(c[0], c[1], env); });
        }
        return std::nullopt;
      case WrapKind::Scale:
        if (isChain(c[0])) {
          return attempt("mul-invariant", [&] { return scaleChain(n->factor, c[0], env); });
        }
        return std::nullopt;
      case WrapKind::Log:
        if (isChain(c[0])) {
          return attempt("log-chain", [&] { return logChain(c[0], env); });
        }
        return std::nullopt;
      case WrapKind::Exp:
        if (isChain(c[0])) {
          return attempt("exp-chain", [&] { return expChain(c[0], env); });
        }
        return std::nullopt;
      case WrapKind::Pow:
        if (isInvariant(c[0]) && isChain(c[1])) {
          return attempt("pow-const-base", [&] { return powConstBase(c[0]->inv, c[1], env); });
        }
        return std::nullopt;
      case WrapKind::Reshape:
        if (isChain(c[0])) {
          return attempt("push-reshape",
                         [&] { return pushReshape(c[0], n->target, n->perm, env); });
        }
        return std::nullopt;
      case WrapKind::Slice:
        if (isChain(c[0])) {
          return attempt("push-slice", [&] { return pushSlice(c[0], n->spec, env); });
        }
        return std::nullopt;
      case WrapKind::Broadcast:
        if (isChain(c[0])) {
          return attempt("push-broadcast", [&] { return pushBroadcast(c[0], n->shape, env); });
        }
        return std::nullopt;
      case WrapKind::Concat:
        if (isChain(c[0]) || isChain(c[1])) {
          return attempt("concat-chains", [&] { return concatChains(c[0], c[1], n->axis, env); });
        }
        return std::nullopt;
    }
    return std::nullopt;
  }
};

}  // namespace

std::pair<TevPtr, RewriteTrace> normalize(const TevPtr& t, const ShapeEnv& env) {
  TevPtr current = t;
  RewriteTrace trace;
  int applied = 0;
  for (;;) {
    Normalizer nz{env, {}};
    std::optional<TevPtr> next = nz.visit(current);
    if (!next) break;
    if (++applied > kRewriteBudget) {
      fail(ErrorKind::RewriteBudgetExceeded,
           "normalize exceeded " + std::to_string(kRewriteBudget) +
               " rule applications; this indicates a non-terminating rule");
    }
    trace.steps.push_back({nz.rule, renderTev(current), renderTev(*next)});
    current = *next;
  }
  return {current, trace};
}

bool isFullyRewritten(const TevPtr& t, const ShapeEnv& env) {
  Normalizer nz{env, {}};
  return !nz.visit(t).has_value();
}

bool chainInvariantsHold(const TevPtr& t) {
  switch (t->kind) {
    case TevKind::Invariant:
      return t->inv != nullptr;
    case TevKind::Unknown:
      return true;
    case TevKind::Chain: {
      if (t->operands.size() != t->ops.size() + 1 || t->ops.empty()) return false;
      for (size_t j = 0; j < t->operands.size(); ++j) {
        const TevPtr& o = t->operands[j];
        if (o->shape != t->shape) return false;
        if (isChain(o) && j + 1 != t->operands.size()) return false;
        if (!chainInvariantsHold(o)) return false;
      }
      return true;
    }
    case TevKind::Wrap:
      return std::all_of(t->children.begin(), t->children.end(), chainInvariantsHold);
  }
  return false;
}

}  // namespace tev
