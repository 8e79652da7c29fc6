#include "tev/analysis.hpp"

#include <algorithm>
#include <optional>
#include <set>
#include <utility>

#include "tev/error.hpp"
#include "tev/print.hpp"

namespace tev {

namespace {

// ----- update-pattern matching ----------------------------------------------

// One flattening pass over the commutative/associative structure of '+'
// (Sub and Neg contribute negated terms).
void flattenAddTerms(const ExprPtr& e, bool negated,
                     std::vector<std::pair<ExprPtr, bool>>& out) {
  if (e->kind == ExprKind::Binary && e->bop == BinaryOp::Add) {
    flattenAddTerms(e->args[0], negated, out);
    flattenAddTerms(e->args[1], negated, out);
    return;
  }
  if (e->kind == ExprKind::Binary && e->bop == BinaryOp::Sub) {
    flattenAddTerms(e->args[0], negated, out);
    flattenAddTerms(e->args[1], !negated, out);
    return;
  }
  if (e->kind == ExprKind::Unary && e->uop == UnaryOp::Neg) {
    flattenAddTerms(e->args[0], !negated, out);
    return;
  }
  out.push_back({e, negated});
}

void flattenMulFactors(const ExprPtr& e, std::vector<ExprPtr>& out) {
  if (e->kind == ExprKind::Binary && e->bop == BinaryOp::Mul) {
    flattenMulFactors(e->args[0], out);
    flattenMulFactors(e->args[1], out);
    return;
  }
  out.push_back(e);
}

bool isVarNamed(const ExprPtr& e, const std::string& name) {
  return e->kind == ExprKind::Var && e->var == name;
}

struct Update {
  ChainOp op{};
  ExprPtr step;  // never references the updated variable
};

// Recognizes `v = v op e` syntactically, after one flattening pass: v must
// appear exactly once, as a whole positive term/factor. On failure the
// reason explains what blocked the recurrence.
struct MatchOutcome {
  std::optional<Update> update;
  std::string reason;
};

MatchOutcome matchUpdate(const std::string& v, const ExprPtr& rhs, const Shape& shape) {
  std::vector<std::pair<ExprPtr, bool>> terms;
  flattenAddTerms(rhs, false, terms);
  int positive = 0;
  int negative = 0;
  for (const auto& [t, neg] : terms) {
    if (isVarNamed(t, v)) (neg ? negative : positive)++;
  }
  if (positive == 1 && negative == 0) {
    ExprPtr step;
    for (const auto& [t, neg] : terms) {
      if (isVarNamed(t, v)) continue;
      if (referencesVar(t, v)) {
        return {std::nullopt, std::string(errorKindName(ErrorKind::SelfReferentialStep)) +
                                  ": '" + v + "' also appears inside the step term " +
                                  renderExpr(t)};
      }
      if (!step) {
        step = neg ? eNeg(t) : t;
      } else {
        step = neg ? eSub(step, t) : eAdd(step, t);
      }
    }
    if (!step) step = shape.rank() == 0 ? eScalar(0.0) : eZeros(shape);
    return {Update{ChainOp::Add, step}, ""};
  }

  std::vector<ExprPtr> factors;
  flattenMulFactors(rhs, factors);
  int occurrences = 0;
  for (const ExprPtr& f : factors) {
    if (isVarNamed(f, v)) occurrences++;
  }
  if (occurrences == 1) {
    ExprPtr step;
    for (const ExprPtr& f : factors) {
      if (isVarNamed(f, v)) continue;
      if (referencesVar(f, v)) {
        return {std::nullopt, std::string(errorKindName(ErrorKind::SelfReferentialStep)) +
                                  ": '" + v + "' also appears inside the step factor " +
                                  renderExpr(f)};
      }
      step = step ? eMul(step, f) : f;
    }
    if (!step) step = shape.rank() == 0 ? eScalar(1.0) : eOnes(shape);
    return {Update{ChainOp::Mul, step}, ""};
  }

  if (referencesVar(rhs, v)) {
    return {std::nullopt,
            std::string(errorKindName(ErrorKind::SelfReferentialStep)) + ": '" + v +
                "' is not updated as v <- v + e or v <- v * e (it appears " +
                "non-linearly or more than once in " + renderExpr(rhs) + ")"};
  }
  return {std::nullopt, "assignment replaces '" + v +
                            "' without using its previous value; not a recurrence update"};
}

// ----- per-program analysis state -------------------------------------------

struct Analyzer {
  const LoopProgram& p;
  const Loop& loop;
  ShapeEnv env;
  AnalysisResult r;

  std::map<std::string, std::vector<size_t>> assignStmts;  // var -> body stmt indices
  std::map<size_t, Update> updates;                        // update stmt -> pattern
  std::map<std::string, ChainOp> updateOp;                 // carried var -> shared op

  std::map<std::string, TevPtr> header;  // resolved loop-carried evolutions
  std::set<std::string> inProgress;      // cycle detection for resolveHeader
  std::map<size_t, TevPtr> stepTev;      // update stmt -> step evolution
  std::map<size_t, TevPtr> valueTev;     // derived stmt -> RHS evolution

  Analyzer(const LoopProgram& prog, const Loop& l)
      : p(prog), loop(l), env(programShapes(prog)) {}

  bool isCarried(const std::string& name) const {
    auto it = r.roles.find(name);
    return it != r.roles.end() && it->second == VarRole::LoopCarried;
  }

  TevPtr normalizeInto(const TevPtr& t) {
    auto [out, trace] = normalize(t, env);
    r.trace.steps.insert(r.trace.steps.end(), trace.steps.begin(), trace.steps.end());
    return out;
  }

  void recognizeUpdates() {
    for (const std::string& v : r.loopCarried) {
      std::optional<ChainOp> op;
      std::string failure;
      for (size_t k : assignStmts[v]) {
        MatchOutcome m = matchUpdate(v, loop.body[k].value, env.at(v));
        if (!m.update) {
          failure = m.reason;
          break;
        }
        if (op && *op != m.update->op) {
          failure = "updates mix '+' and '*' within one iteration";
          break;
        }
        op = m.update->op;
        updates.emplace(k, *m.update);
      }
      if (!failure.empty()) {
        r.failures[v] = failure;
        for (size_t k : assignStmts[v]) updates.erase(k);
      } else {
        updateOp[v] = *op;
      }
    }
  }

  // Value of a loop-carried variable within iteration i after the updates
  // at statements strictly before `pos` have run: the header value advanced
  // by those steps. '+' steps accumulate via chain addition; a '*' step by
  // an invariant multiplies into the head of a '*'-headed chain.
  TevPtr carriedValueAt(const std::string& v, size_t pos) {
    TevPtr value = resolveHeader(v);
    if (isUnknown(value)) return value;
    ChainOp op = updateOp.at(v);
    for (size_t k : assignStmts.at(v)) {
      if (k >= pos) break;
      TevPtr step = resolveStep(k);
      if (isUnknown(step)) return step;
      try {
        if (op == ChainOp::Add) {
          value = tevAdd(value, step, env);
        } else {
          value = mulIntoHead(value, step);
        }
      } catch (const Error& e) {
        return tevUnknown(v, std::string("cannot advance '") + v +
                                 "' past its mid-iteration update: " + e.what(),
                          value->shape);
      }
    }
    return value;
  }

  // K * chain with a '*' head operator: only the head operand changes,
  // since (K*s)(i) = (K*s)(i-1) * tail(i-1) holds whenever s does.
  static TevPtr mulIntoHead(const TevPtr& value, const TevPtr& step) {
    if (isInvariant(value) && isInvariant(step)) {
      return tevInvariant(eMul(value->inv, step->inv), value->shape);
    }
    if (!isChain(value) || !isInvariant(step) || value->ops.front() != ChainOp::Mul ||
        !isInvariant(value->operands.front())) {
      fail(ErrorKind::NonAdditiveChain,
           "mid-iteration '*' composition needs an invariant step and a '*'-headed chain");
    }
    std::vector<TevPtr> operands = value->operands;
    operands[0] =
        tevInvariant(eMul(operands[0]->inv, step->inv), value->shape);
    return tevChain(std::move(operands), value->ops);
  }

  TevPtr resolveStep(size_t k) {
    auto it = stepTev.find(k);
    if (it != stepTev.end()) return it->second;
    TevPtr t = normalizeInto(mapExpr(updates.at(k).step, k));
    stepTev.emplace(k, t);
    return t;
  }

  TevPtr resolveStmtValue(size_t k) {
    auto it = valueTev.find(k);
    if (it != valueTev.end()) return it->second;
    TevPtr t = normalizeInto(mapExpr(loop.body[k].value, k));
    valueTev.emplace(k, t);
    return t;
  }

  TevPtr resolveHeader(const std::string& v) {
    auto it = header.find(v);
    if (it != header.end()) return it->second;
    const Shape& shape = env.at(v);
    if (r.failures.count(v)) {
      return tevUnknown(v, r.failures.at(v), shape);
    }
    if (inProgress.count(v)) {
      return tevUnknown(v, "'" + v + "' takes part in a cyclic system of loop-carried "
                               "updates; coupled recurrences are not representable",
                        shape);
    }
    inProgress.insert(v);
    ChainOp op = updateOp.at(v);
    TevPtr total;
    for (size_t k : assignStmts.at(v)) {
      TevPtr step = resolveStep(k);
      if (!total) {
        total = step;
      } else if (isUnknown(step)) {
        total = step;
      } else {
        try {
          total = op == ChainOp::Add ? tevAdd(total, step, env) : tevMul(total, step, env);
        } catch (const Error& e) {
          total = tevUnknown(v, std::string("cannot combine multiple updates: ") + e.what(),
                             shape);
        }
      }
      if (isUnknown(total)) break;
    }
    TevPtr result = normalizeInto(inject(total, eVar(v), op, env));
    inProgress.erase(v);
    header.emplace(v, result);
    return result;
  }

  // Evolution of `e` as seen at body statement `pos` during iteration i.
  TevPtr mapExpr(const ExprPtr& e, size_t pos) {
    switch (e->kind) {
      case ExprKind::Var: {
        const std::string& name = e->var;
        if (name == loop.counter) {
          return tevChain({tevInvariant(eScalar(0.0), Shape{}),
                           tevInvariant(eScalar(1.0), Shape{})},
                          {ChainOp::Add});
        }
        auto assigned = assignStmts.find(name);
        if (assigned == assignStmts.end()) {
          return tevInvariant(eVar(name), env.at(name));  // param or pre-loop value
        }
        if (isCarried(name)) return carriedValueAt(name, pos);
        // Derived: latest assignment strictly before this statement
        // (validation guarantees one exists for any body read).
        size_t latest = SIZE_MAX;
        for (size_t k : assigned->second) {
          if (k < pos) latest = k;
        }
        if (latest == SIZE_MAX) {
          fail(ErrorKind::Internal,
               "derived variable '" + name + "' read before assignment survived validation");
        }
        return resolveStmtValue(latest);
      }
      case ExprKind::Lit:
      case ExprKind::Zeros:
      case ExprKind::Ones:
        return tevInvariant(e, env);
      case ExprKind::Binary: {
        TevPtr a = mapExpr(e->args[0], pos);
        TevPtr b = mapExpr(e->args[1], pos);
        switch (e->bop) {
          case BinaryOp::Add: return wrapBinary(WrapKind::Add, a, b);
          case BinaryOp::Sub: return wrapBinary(WrapKind::Sub, a, b);
          case BinaryOp::Mul: return wrapBinary(WrapKind::Mul, a, b);
        }
        fail(ErrorKind::Internal, "unhandled binary op");
      }
      case ExprKind::Unary: {
        TevPtr a = mapExpr(e->args[0], pos);
        switch (e->uop) {
          case UnaryOp::Neg: return wrapUnary(WrapKind::Neg, a);
          case UnaryOp::Log: return wrapUnary(WrapKind::Log, a);
          case UnaryOp::Exp: return wrapUnary(WrapKind::Exp, a);
        }
        fail(ErrorKind::Internal, "unhandled unary op");
      }
      case ExprKind::Scale:
        return wrapScale(e->factor, mapExpr(e->args[0], pos));
      case ExprKind::Pow:
        return wrapPow(mapExpr(e->args[0], pos), mapExpr(e->args[1], pos));
      case ExprKind::Reshape:
        return wrapReshape(mapExpr(e->args[0], pos), e->target, e->perm);
      case ExprKind::Slice:
        return wrapSlice(mapExpr(e->args[0], pos), e->spec);
      case ExprKind::Concat:
        return wrapConcat(mapExpr(e->args[0], pos), mapExpr(e->args[1], pos), e->axis);
      case ExprKind::Broadcast:
        return wrapBroadcast(mapExpr(e->args[0], pos), e->shape);
    }
    fail(ErrorKind::Internal, "unhandled expression kind");
  }

  void run() {
    r.tripCount = loop.tripCount;
    r.loopCarried = loopCarriedVars(p);
    std::set<std::string> carriedSet(r.loopCarried.begin(), r.loopCarried.end());
    for (size_t k = 0; k < loop.body.size(); ++k) {
      const std::string& name = loop.body[k].name;
      assignStmts[name].push_back(k);
      r.roles[name] =
          carriedSet.count(name) ? VarRole::LoopCarried : VarRole::Derived;
    }

    recognizeUpdates();
    for (const std::string& v : r.loopCarried) {
      if (!r.failures.count(v)) resolveHeader(v);
    }
    for (size_t k = 0; k < loop.body.size(); ++k) {
      if (!isCarried(loop.body[k].name)) resolveStmtValue(k);
    }

    for (const auto& [name, stmts] : assignStmts) {
      if (r.failures.count(name)) continue;
      if (isCarried(name)) {
        r.perVariable[name] = header.at(name);
      } else {
        r.perVariable[name] = valueTev.at(stmts.back());
      }
    }

    for (const auto& [name, tev] : r.perVariable) {
      (void)tev;
      try {
        r.exitValues[name] = exitValue(r, name, loop.tripCount, env);
      } catch (const Error& e) {
        r.exitFailures[name] =
            std::string(errorKindName(e.kind())) + ": " + e.what();
      }
    }
  }
};

// Value of the level-`j` sequences of a non-uniform chain, unrolled
// symbolically for `idx` steps. Bounded by kMaxUnrollForExit.
ExprPtr symbolicAt(const TevPtr& t, int64_t idx, const ShapeEnv& env);

ExprPtr tidyOrKeep(const ExprPtr& e, const ShapeEnv& env) {
  try {
    return simplifyInvariant(e, env);
  } catch (const Error&) {
    return e;
  }
}

ExprPtr symbolicAt(const TevPtr& t, int64_t idx, const ShapeEnv& env) {
  switch (t->kind) {
    case TevKind::Invariant:
      return t->inv;
    case TevKind::Unknown:
      fail(ErrorKind::CannotEvaluateUnknown,
           "'" + t->unknownVar + "' has no evolution (" + t->reason + ")");
    case TevKind::Wrap: {
      std::vector<ExprPtr> ch;
      for (const auto& c : t->children) ch.push_back(symbolicAt(c, idx, env));
      switch (t->wrap) {
        case WrapKind::Reshape: return eReshapePerm(ch[0], t->target, t->perm);
        case WrapKind::Slice: return eSlice(ch[0], t->spec);
        case WrapKind::Concat: return eConcat(ch[0], ch[1], t->axis);
        case WrapKind::Broadcast: return eBroadcast(ch[0], t->shape);
        case WrapKind::Log: return eLog(ch[0]);
        case WrapKind::Exp: return eExp(ch[0]);
        case WrapKind::Neg: return eNeg(ch[0]);
        case WrapKind::Add: return eAdd(ch[0], ch[1]);
        case WrapKind::Sub: return eSub(ch[0], ch[1]);
        case WrapKind::Mul: return eMul(ch[0], ch[1]);
        case WrapKind::Scale: return eScale(t->factor, ch[0]);
        case WrapKind::Pow: return ePow(ch[0], ch[1]);
      }
      fail(ErrorKind::Internal, "unhandled wrap kind");
    }
    case TevKind::Chain:
      break;
  }
  try {
    return closedFormAt(t, idx);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::MixedOperatorChain) throw;
  }
  if (idx > kMaxUnrollForExit) {
    fail(ErrorKind::MixedChainTooLong,
         "chain has no uniform closed form and would need " + std::to_string(idx) +
             " stepwise iterations (cap " + std::to_string(kMaxUnrollForExit) + ")");
  }
  TevPtr flat = flattenChain(t);
  size_t m = flat->ops.size();
  std::vector<ExprPtr> state;
  state.reserve(m + 1);
  for (const TevPtr& o : flat->operands) state.push_back(symbolicAt(o, 0, env));
  for (int64_t k = 1; k <= idx; ++k) {
    // Front-to-back in-place: each level consumes the old value of the
    // level below it, then the final (possibly iteration-dependent)
    // operand is refreshed for index k.
    for (size_t j = 0; j < m; ++j) {
      state[j] = tidyOrKeep(
          eBinary(chainOpBinary(flat->ops[j]), state[j], state[j + 1]), env);
    }
    state[m] = symbolicAt(flat->operands[m], k, env);
  }
  return state[0];
}

}  // namespace

AnalysisResult analyzeLoop(const LoopProgram& p) {
  if (!p.loop) {
    return {};
  }
  Analyzer a(p, *p.loop);
  a.run();
  return a.r;
}

ExprPtr exitValue(const AnalysisResult& r, const std::string& varName, int64_t tripCount,
                  const ShapeEnv& env) {
  auto it = r.perVariable.find(varName);
  if (it == r.perVariable.end()) {
    auto why = r.failures.find(varName);
    fail(ErrorKind::NoTevAvailable,
         "'" + varName + "' has no evolution" +
             (why == r.failures.end() ? "" : ": " + why->second));
  }
  const TevPtr& t = it->second;
  if (isUnknown(t)) {
    fail(ErrorKind::NoTevAvailable,
         "'" + varName + "' has no evolution: " + t->reason);
  }
  int64_t idx = tripCount;
  auto role = r.roles.find(varName);
  if (role != r.roles.end() && role->second == VarRole::Derived) {
    if (tripCount == 0) {
      fail(ErrorKind::NoTevAvailable,
           "'" + varName + "' is only assigned inside a loop that never runs");
    }
    idx = tripCount - 1;  // value set during the final iteration
  }
  return tidyOrKeep(symbolicAt(t, idx, env), env);
}

}  // namespace tev
