#include "tev/interp.hpp"

namespace tev {

Tensor evalExpr(const ExprPtr& e, const Bindings& env) {
  switch (e->kind) {
    case ExprKind::Var: {
      auto it = env.find(e->var);
      if (it == env.end()) fail(ErrorKind::UnboundVariable, "'" + e->var + "' has no value");
      return it->second;
    }
    case ExprKind::Lit:
      return e->lit;
    case ExprKind::Zeros:
      return Tensor::zeros(e->shape);
    case ExprKind::Ones:
      return Tensor::ones(e->shape);
    case ExprKind::Binary:
      return elementwiseBinary(e->bop, evalExpr(e->args[0], env), evalExpr(e->args[1], env));
    case ExprKind::Unary:
      return elementwiseUnary(e->uop, evalExpr(e->args[0], env));
    case ExprKind::Scale:
      return scale(e->factor, evalExpr(e->args[0], env));
    case ExprKind::Pow:
      return power(evalExpr(e->args[0], env), evalExpr(e->args[1], env));
    case ExprKind::Reshape: {
      Tensor in = evalExpr(e->args[0], env);
      if (e->perm) {
        std::vector<int64_t> permuted(e->perm->size());
        for (size_t i = 0; i < e->perm->size(); ++i) {
          permuted[i] = in.shape().extent((*e->perm)[i]);
        }
        in = reshape(in, Shape{std::move(permuted)}, &*e->perm);
      }
      if (e->target) in = reshape(in, *e->target);
      return in;
    }
    case ExprKind::Slice:
      return slice(evalExpr(e->args[0], env), e->spec);
    case ExprKind::Concat:
      return concat(evalExpr(e->args[0], env), evalExpr(e->args[1], env), e->axis);
    case ExprKind::Broadcast:
      return broadcastTo(evalExpr(e->args[0], env), e->shape);
  }
  fail(ErrorKind::Internal, "unhandled expression kind");
}

RunResult runProgram(const LoopProgram& p, const Bindings& env, bool recordHeaders) {
  Bindings vars;
  for (const auto& prm : p.params) {
    auto it = env.find(prm.name);
    if (it == env.end()) {
      fail(ErrorKind::UnboundParameter, "no binding for parameter '" + prm.name + "'");
    }
    if (it->second.shape() != prm.shape) {
      fail(ErrorKind::ShapeMismatch, "binding for '" + prm.name + "' has shape " +
                                         it->second.shape().str() + ", declared " +
                                         prm.shape.str());
    }
    vars.emplace(prm.name, it->second);
  }

  auto runStmt = [&vars](const Stmt& s) { vars.insert_or_assign(s.name, evalExpr(s.value, vars)); };

  for (const auto& s : p.preStmts) runStmt(s);

  RunResult result;
  if (p.loop) {
    std::vector<std::string> carried = loopCarriedVars(p);
    for (int64_t i = 0; i < p.loop->tripCount; ++i) {
      vars.insert_or_assign(p.loop->counter, Tensor::scalar(static_cast<double>(i)));
      if (recordHeaders) {
        for (const auto& v : carried) result.headerLog[v].push_back(vars.at(v));
      }
      for (const auto& s : p.loop->body) runStmt(s);
    }
    vars.erase(p.loop->counter);
    if (recordHeaders && p.loop->tripCount == 0) {
      for (const auto& v : carried) result.headerLog[v];  // present but empty
    }
  }

  for (const auto& s : p.postStmts) runStmt(s);

  for (const auto& name : p.returns) {
    auto it = vars.find(name);
    if (it == vars.end()) {
      fail(ErrorKind::UnboundVariable,
           "'" + name + "' was never assigned (zero-trip loop?)");
    }
    result.returns.push_back(it->second);
  }
  return result;
}

}  // namespace tev
