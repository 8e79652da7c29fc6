#include "tev/ir.hpp"

#include <algorithm>
#include <functional>

namespace tev {

namespace {

std::shared_ptr<Expr> node(ExprKind kind, SourceSpan span) {
  auto e = std::make_shared<Expr>();
  e->kind = kind;
  e->span = span;
  return e;
}

}  // namespace

ExprPtr eVar(std::string name, SourceSpan span) {
  auto e = node(ExprKind::Var, span);
  e->var = std::move(name);
  return e;
}

ExprPtr eLit(Tensor value, SourceSpan span) {
  auto e = node(ExprKind::Lit, span);
  e->lit = std::move(value);
  return e;
}

ExprPtr eScalar(double value, SourceSpan span) {
  return eLit(Tensor::scalar(value), span);
}

ExprPtr eZeros(Shape shape, SourceSpan span) {
  auto e = node(ExprKind::Zeros, span);
  e->shape = std::move(shape);
  return e;
}

ExprPtr eOnes(Shape shape, SourceSpan span) {
  auto e = node(ExprKind::Ones, span);
  e->shape = std::move(shape);
  return e;
}

ExprPtr eBinary(BinaryOp op, ExprPtr a, ExprPtr b, SourceSpan span) {
  auto e = node(ExprKind::Binary, span);
  e->bop = op;
  e->args = {std::move(a), std::move(b)};
  return e;
}

ExprPtr eAdd(ExprPtr a, ExprPtr b) { return eBinary(BinaryOp::Add, std::move(a), std::move(b)); }
ExprPtr eSub(ExprPtr a, ExprPtr b) { return eBinary(BinaryOp::Sub, std::move(a), std::move(b)); }
ExprPtr eMul(ExprPtr a, ExprPtr b) { return eBinary(BinaryOp::Mul, std::move(a), std::move(b)); }

ExprPtr eUnary(UnaryOp op, ExprPtr a, SourceSpan span) {
  auto e = node(ExprKind::Unary, span);
  e->uop = op;
  e->args = {std::move(a)};
  return e;
}

ExprPtr eNeg(ExprPtr a) { return eUnary(UnaryOp::Neg, std::move(a)); }
ExprPtr eLog(ExprPtr a) { return eUnary(UnaryOp::Log, std::move(a)); }
ExprPtr eExp(ExprPtr a) { return eUnary(UnaryOp::Exp, std::move(a)); }

ExprPtr eScale(double factor, ExprPtr a, SourceSpan span) {
  auto e = node(ExprKind::Scale, span);
  e->factor = factor;
  e->args = {std::move(a)};
  return e;
}

ExprPtr ePow(ExprPtr base, ExprPtr exponent, SourceSpan span) {
  auto e = node(ExprKind::Pow, span);
  e->args = {std::move(base), std::move(exponent)};
  return e;
}

ExprPtr eReshapePerm(ExprPtr a, std::optional<Shape> targetShape,
                     std::optional<std::vector<int>> perm, SourceSpan span) {
  auto e = node(ExprKind::Reshape, span);
  e->target = std::move(targetShape);
  e->perm = std::move(perm);
  e->args = {std::move(a)};
  return e;
}

ExprPtr eReshape(ExprPtr a, Shape targetShape, SourceSpan span) {
  return eReshapePerm(std::move(a), std::move(targetShape), std::nullopt, span);
}

ExprPtr eTranspose(ExprPtr a, std::vector<int> perm, SourceSpan span) {
  return eReshapePerm(std::move(a), std::nullopt, std::move(perm), span);
}

ExprPtr eSlice(ExprPtr a, SliceSpec spec, SourceSpan span) {
  auto e = node(ExprKind::Slice, span);
  e->spec = std::move(spec);
  e->args = {std::move(a)};
  return e;
}

ExprPtr eConcat(ExprPtr a, ExprPtr b, int axis, SourceSpan span) {
  auto e = node(ExprKind::Concat, span);
  e->axis = axis;
  e->args = {std::move(a), std::move(b)};
  return e;
}

ExprPtr eBroadcast(ExprPtr a, Shape targetShape, SourceSpan span) {
  auto e = node(ExprKind::Broadcast, span);
  e->shape = std::move(targetShape);
  e->args = {std::move(a)};
  return e;
}

std::optional<Tensor> litValueOf(const Expr& e) {
  switch (e.kind) {
    case ExprKind::Lit: return e.lit;
    case ExprKind::Zeros: return Tensor::zeros(e.shape);
    case ExprKind::Ones: return Tensor::ones(e.shape);
    default: return std::nullopt;
  }
}

bool structurallyEqual(const ExprPtr& a, const ExprPtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case ExprKind::Var:
      return a->var == b->var;
    case ExprKind::Lit:
      return a->lit == b->lit;
    case ExprKind::Zeros:
    case ExprKind::Ones:
      return a->shape == b->shape;
    case ExprKind::Binary:
      if (a->bop != b->bop) return false;
      break;
    case ExprKind::Unary:
      if (a->uop != b->uop) return false;
      break;
    case ExprKind::Scale:
      if (a->factor != b->factor) return false;
      break;
    case ExprKind::Pow:
      break;
    case ExprKind::Reshape:
      if (a->target != b->target || a->perm != b->perm) return false;
      break;
    case ExprKind::Slice:
      if (!(a->spec == b->spec)) return false;
      break;
    case ExprKind::Concat:
      if (a->axis != b->axis) return false;
      break;
    case ExprKind::Broadcast:
      if (a->shape != b->shape) return false;
      break;
  }
  if (a->args.size() != b->args.size()) return false;
  for (size_t i = 0; i < a->args.size(); ++i) {
    if (!structurallyEqual(a->args[i], b->args[i])) return false;
  }
  return true;
}

namespace {

bool stmtsEqual(const std::vector<Stmt>& a, const std::vector<Stmt>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !structurallyEqual(a[i].value, b[i].value)) return false;
  }
  return true;
}

}  // namespace

bool structurallyEqual(const LoopProgram& a, const LoopProgram& b) {
  if (a.name != b.name || a.returns != b.returns) return false;
  if (a.params.size() != b.params.size()) return false;
  for (size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].name != b.params[i].name || a.params[i].shape != b.params[i].shape)
      return false;
  }
  if (!stmtsEqual(a.preStmts, b.preStmts) || !stmtsEqual(a.postStmts, b.postStmts))
    return false;
  if (a.loop.has_value() != b.loop.has_value()) return false;
  if (a.loop) {
    if (a.loop->counter != b.loop->counter || a.loop->tripCount != b.loop->tripCount)
      return false;
    if (!stmtsEqual(a.loop->body, b.loop->body)) return false;
  }
  return true;
}

void collectVars(const ExprPtr& e, std::set<std::string>& out) {
  if (e->kind == ExprKind::Var) {
    out.insert(e->var);
    return;
  }
  for (const auto& a : e->args) collectVars(a, out);
}

bool referencesVar(const ExprPtr& e, const std::string& name) {
  if (e->kind == ExprKind::Var) return e->var == name;
  for (const auto& a : e->args) {
    if (referencesVar(a, name)) return true;
  }
  return false;
}

namespace {

// Internal failure carrying the offending node's span, converted either to
// an Error (strict inference) or a Diagnostic (validation).
struct DiagErr {
  SourceSpan span;
  ErrorKind kind;
  std::string message;
};

Shape inferShapeImpl(const ExprPtr& e, const ShapeEnv& env) {
  switch (e->kind) {
    case ExprKind::Var: {
      auto it = env.find(e->var);
      if (it == env.end()) {
        throw DiagErr{e->span, ErrorKind::UnknownIdentifier, "undefined name '" + e->var + "'"};
      }
      return it->second;
    }
    case ExprKind::Lit:
      return e->lit.shape();
    case ExprKind::Zeros:
    case ExprKind::Ones:
      return e->shape;
    case ExprKind::Binary: {
      Shape a = inferShapeImpl(e->args[0], env);
      Shape b = inferShapeImpl(e->args[1], env);
      if (a != b) {
        throw DiagErr{e->span, ErrorKind::ShapeMismatch,
                      std::string(binaryOpName(e->bop)) + " of shapes " + a.str() + " and " +
                          b.str()};
      }
      return a;
    }
    case ExprKind::Unary:
    case ExprKind::Scale:
      return inferShapeImpl(e->args[0], env);
    case ExprKind::Pow: {
      Shape a = inferShapeImpl(e->args[0], env);
      Shape b = inferShapeImpl(e->args[1], env);
      if (a != b) {
        throw DiagErr{e->span, ErrorKind::ShapeMismatch,
                      "pow of shapes " + a.str() + " and " + b.str()};
      }
      return a;
    }
    case ExprKind::Reshape: {
      Shape in = inferShapeImpl(e->args[0], env);
      try {
        Shape permuted = in;
        if (e->perm) {
          // Validates the permutation and yields the permuted shape.
          Shape probe = reshapeResultShape(in, in, &*e->perm);
          (void)probe;
          std::vector<int64_t> dims(e->perm->size());
          for (size_t i = 0; i < e->perm->size(); ++i) dims[i] = in.extent((*e->perm)[i]);
          permuted = Shape{std::move(dims)};
        }
        if (e->target) return reshapeResultShape(permuted, *e->target, nullptr);
        return permuted;
      } catch (const Error& err) {
        throw DiagErr{e->span, err.kind(), err.what()};
      }
    }
    case ExprKind::Slice: {
      Shape in = inferShapeImpl(e->args[0], env);
      try {
        return sliceResultShape(in, e->spec);
      } catch (const Error& err) {
        throw DiagErr{e->span, err.kind(), err.what()};
      }
    }
    case ExprKind::Concat: {
      Shape a = inferShapeImpl(e->args[0], env);
      Shape b = inferShapeImpl(e->args[1], env);
      try {
        return concatResultShape(a, b, e->axis);
      } catch (const Error& err) {
        throw DiagErr{e->span, err.kind(), err.what()};
      }
    }
    case ExprKind::Broadcast: {
      Shape in = inferShapeImpl(e->args[0], env);
      if (!broadcastCompatible(in, e->shape)) {
        throw DiagErr{e->span, ErrorKind::IncompatibleBroadcast,
                      "broadcast " + in.str() + " -> " + e->shape.str()};
      }
      return e->shape;
    }
  }
  throw DiagErr{e->span, ErrorKind::Internal, "unhandled expression kind"};
}

}  // namespace

Shape inferShape(const ExprPtr& e, const ShapeEnv& env) {
  try {
    return inferShapeImpl(e, env);
  } catch (const DiagErr& d) {
    throw Error(d.kind, d.message + " (line " + std::to_string(d.span.line) + ", col " +
                            std::to_string(d.span.col) + ")");
  }
}

std::vector<std::string> loopCarriedVars(const LoopProgram& p) {
  std::vector<std::string> result;
  if (!p.loop) return result;
  const auto& body = p.loop->body;
  std::map<std::string, size_t> firstAssign;
  for (size_t k = 0; k < body.size(); ++k) {
    if (!firstAssign.count(body[k].name)) firstAssign[body[k].name] = k;
  }
  std::set<std::string> carried;
  for (size_t k = 0; k < body.size(); ++k) {
    std::set<std::string> reads;
    collectVars(body[k].value, reads);
    for (const auto& v : reads) {
      auto it = firstAssign.find(v);
      if (it != firstAssign.end() && k <= it->second) carried.insert(v);
    }
  }
  // report in first-assignment order
  std::vector<std::pair<size_t, std::string>> ordered;
  for (const auto& v : carried) ordered.emplace_back(firstAssign[v], v);
  std::sort(ordered.begin(), ordered.end());
  for (auto& [_, v] : ordered) result.push_back(v);
  return result;
}

namespace {

void walkExprs(const ExprPtr& e, const std::function<void(const ExprPtr&)>& fn) {
  fn(e);
  for (const auto& a : e->args) walkExprs(a, fn);
}

}  // namespace

ShapeEnv programShapes(const LoopProgram& p) {
  ShapeEnv env;
  for (const auto& prm : p.params) env[prm.name] = prm.shape;
  for (const auto& s : p.preStmts) env[s.name] = inferShape(s.value, env);
  if (p.loop) {
    env[p.loop->counter] = Shape{};
    // Two passes so a later-defined body variable has a shape when reads
    // are re-checked; body reassignment keeps the first shape.
    for (const auto& s : p.loop->body) {
      Shape sh = inferShape(s.value, env);
      if (!env.count(s.name)) env[s.name] = sh;
    }
  }
  for (const auto& s : p.postStmts) env[s.name] = inferShape(s.value, env);
  return env;
}

std::vector<Diagnostic> validateProgram(const LoopProgram& p) {
  std::vector<Diagnostic> diags;
  auto report = [&diags](SourceSpan span, ErrorKind kind, const std::string& msg) {
    diags.push_back(Diagnostic{span, errorKindName(kind), msg});
  };
  auto reportCode = [&diags](SourceSpan span, const std::string& code, const std::string& msg) {
    diags.push_back(Diagnostic{span, code, msg});
  };

  ShapeEnv env;
  std::set<std::string> definedEver;
  std::set<std::string> poisoned;  // names whose shape is unknown due to an earlier error

  auto checkValue = [&](const Stmt& s) -> std::optional<Shape> {
    std::set<std::string> reads;
    collectVars(s.value, reads);
    for (const auto& r : reads) {
      if (poisoned.count(r)) return std::nullopt;  // suppress cascading diagnostics
    }
    try {
      return inferShapeImpl(s.value, env);
    } catch (const DiagErr& d) {
      report(d.span, d.kind, d.message);
      return std::nullopt;
    }
  };

  for (const auto& prm : p.params) {
    if (definedEver.count(prm.name)) {
      report(prm.span, ErrorKind::DuplicateParam, "duplicate parameter '" + prm.name + "'");
      continue;
    }
    definedEver.insert(prm.name);
    env[prm.name] = prm.shape;
  }

  auto defineOutsideLoop = [&](const Stmt& s, std::optional<Shape> shape) {
    if (definedEver.count(s.name)) {
      reportCode(s.span, "Reassignment",
                 "'" + s.name + "' is reassigned outside the loop body");
      return;
    }
    definedEver.insert(s.name);
    if (shape) {
      env[s.name] = *shape;
    } else {
      poisoned.insert(s.name);
    }
  };

  for (const auto& s : p.preStmts) defineOutsideLoop(s, checkValue(s));

  std::set<std::string> loopVariant;
  if (p.loop) {
    const Loop& loop = *p.loop;
    if (loop.tripCount < 0) {
      reportCode(loop.span, "NegativeTripCount", "trip count must be non-negative");
    }
    if (loop.body.empty()) {
      report(loop.span, ErrorKind::EmptyLoopBody, "loop must contain at least one statement");
    }
    if (definedEver.count(loop.counter)) {
      reportCode(loop.span, "CounterShadows",
                 "loop counter '" + loop.counter + "' shadows an existing name");
    }
    env[loop.counter] = Shape{};
    definedEver.insert(loop.counter);
    loopVariant.insert(loop.counter);
    for (const auto& s : loop.body) loopVariant.insert(s.name);

    for (const auto& s : loop.body) {
      auto shape = checkValue(s);
      // pow bases must be loop-invariant inside the body
      walkExprs(s.value, [&](const ExprPtr& e) {
        if (e->kind != ExprKind::Pow) return;
        std::set<std::string> baseVars;
        collectVars(e->args[0], baseVars);
        for (const auto& v : baseVars) {
          if (loopVariant.count(v)) {
            reportCode(e->span, "LoopVariantPowBase",
                       "pow base references loop-variant '" + v + "'");
          }
        }
      });
      if (s.name == loop.counter) {
        reportCode(s.span, "Reassignment", "loop counter '" + s.name + "' is assigned");
        continue;
      }
      auto it = env.find(s.name);
      if (it != env.end() && shape && definedEver.count(s.name)) {
        if (it->second != *shape && !poisoned.count(s.name)) {
          report(s.span, ErrorKind::ShapeMismatch,
                 "'" + s.name + "' changes shape from " + it->second.str() + " to " +
                     shape->str() + " across iterations");
        }
      } else if (shape) {
        env[s.name] = *shape;
        definedEver.insert(s.name);
      } else {
        definedEver.insert(s.name);
        poisoned.insert(s.name);
      }
    }
    // counter scope ends with the body
    env.erase(loop.counter);
  }

  for (const auto& s : p.postStmts) defineOutsideLoop(s, checkValue(s));

  for (const auto& r : p.returns) {
    if (!definedEver.count(r) || (p.loop && r == p.loop->counter)) {
      report(SourceSpan{}, ErrorKind::UnknownIdentifier, "return of undefined name '" + r + "'");
    }
  }
  if (p.returns.empty()) {
    reportCode(SourceSpan{}, "EmptyReturn", "program must return at least one value");
  }
  return diags;
}

}  // namespace tev
