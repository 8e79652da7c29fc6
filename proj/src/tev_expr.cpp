#include "tev/tev_expr.hpp"

#include <map>
#include <sstream>

#include "tev/print.hpp"

namespace tev {

char chainOpChar(ChainOp op) { return op == ChainOp::Add ? '+' : '*'; }

BinaryOp chainOpBinary(ChainOp op) {
  return op == ChainOp::Add ? BinaryOp::Add : BinaryOp::Mul;
}

const char* wrapKindName(WrapKind k) {
  switch (k) {
    case WrapKind::Reshape: return "reshape";
    case WrapKind::Slice: return "slice";
    case WrapKind::Concat: return "concat";
    case WrapKind::Broadcast: return "broadcast";
    case WrapKind::Log: return "log";
    case WrapKind::Exp: return "exp";
    case WrapKind::Neg: return "neg";
    case WrapKind::Add: return "add";
    case WrapKind::Sub: return "sub";
    case WrapKind::Mul: return "mul";
    case WrapKind::Scale: return "scale";
    case WrapKind::Pow: return "pow";
  }
  return "?";
}

namespace {

std::shared_ptr<TevExpr> node(TevKind kind, Shape shape) {
  auto t = std::make_shared<TevExpr>();
  t->kind = kind;
  t->shape = std::move(shape);
  return t;
}

}  // namespace

TevPtr tevInvariant(ExprPtr e, const ShapeEnv& env) {
  Shape shape = inferShape(e, env);
  auto t = node(TevKind::Invariant, std::move(shape));
  t->inv = std::move(e);
  return t;
}

TevPtr tevInvariant(ExprPtr e, Shape shape) {
  auto t = node(TevKind::Invariant, std::move(shape));
  t->inv = std::move(e);
  return t;
}

TevPtr tevChain(std::vector<TevPtr> operands, std::vector<ChainOp> ops) {
  if (operands.size() != ops.size() + 1 || ops.empty()) {
    fail(ErrorKind::Internal, "chain requires n+1 operands for n ops, n >= 1");
  }
  for (const auto& o : operands) {
    if (o->shape != operands[0]->shape) {
      fail(ErrorKind::ShapeMismatch, "chain operands must share one shape: " +
                                         operands[0]->shape.str() + " vs " + o->shape.str());
    }
  }
  auto t = node(TevKind::Chain, operands[0]->shape);
  t->operands = std::move(operands);
  t->ops = std::move(ops);
  return t;
}

TevPtr tevUnknown(std::string varName, std::string reason, Shape shape) {
  auto t = node(TevKind::Unknown, std::move(shape));
  t->unknownVar = std::move(varName);
  t->reason = std::move(reason);
  return t;
}

TevPtr wrapReshape(TevPtr child, std::optional<Shape> target,
                   std::optional<std::vector<int>> perm) {
  Shape in = child->shape;
  if (perm) {
    Shape check = reshapeResultShape(in, in, &*perm);  // validates the permutation
    (void)check;
    std::vector<int64_t> dims(perm->size());
    for (size_t i = 0; i < perm->size(); ++i) dims[i] = in.extent((*perm)[i]);
    in = Shape{std::move(dims)};
  }
  if (target) in = reshapeResultShape(in, *target, nullptr);
  auto t = node(TevKind::Wrap, std::move(in));
  t->wrap = WrapKind::Reshape;
  t->target = std::move(target);
  t->perm = std::move(perm);
  t->children = {std::move(child)};
  return t;
}

TevPtr wrapSlice(TevPtr child, SliceSpec spec) {
  auto t = node(TevKind::Wrap, sliceResultShape(child->shape, spec));
  t->wrap = WrapKind::Slice;
  t->spec = std::move(spec);
  t->children = {std::move(child)};
  return t;
}

TevPtr wrapConcat(TevPtr a, TevPtr b, int axis) {
  auto t = node(TevKind::Wrap, concatResultShape(a->shape, b->shape, axis));
  t->wrap = WrapKind::Concat;
  t->axis = axis;
  t->children = {std::move(a), std::move(b)};
  return t;
}

TevPtr wrapBroadcast(TevPtr child, Shape target) {
  if (!broadcastCompatible(child->shape, target)) {
    fail(ErrorKind::IncompatibleBroadcast,
         "broadcast " + child->shape.str() + " -> " + target.str());
  }
  auto t = node(TevKind::Wrap, target);
  t->wrap = WrapKind::Broadcast;
  t->children = {std::move(child)};
  return t;
}

TevPtr wrapUnary(WrapKind k, TevPtr child) {
  auto t = node(TevKind::Wrap, child->shape);
  t->wrap = k;
  t->children = {std::move(child)};
  return t;
}

TevPtr wrapBinary(WrapKind k, TevPtr a, TevPtr b) {
  if (a->shape != b->shape) {
    fail(ErrorKind::ShapeMismatch, std::string(wrapKindName(k)) + " of shapes " +
                                       a->shape.str() + " and " + b->shape.str());
  }
  auto t = node(TevKind::Wrap, a->shape);
  t->wrap = k;
  t->children = {std::move(a), std::move(b)};
  return t;
}

TevPtr wrapScale(double factor, TevPtr child) {
  auto t = node(TevKind::Wrap, child->shape);
  t->wrap = WrapKind::Scale;
  t->factor = factor;
  t->children = {std::move(child)};
  return t;
}

TevPtr wrapPow(TevPtr base, TevPtr exponent) {
  return wrapBinary(WrapKind::Pow, std::move(base), std::move(exponent));
}

// ----- inspection -----------------------------------------------------------

bool isUniformChain(const TevPtr& t, ChainOp op) {
  if (!isChain(t)) return false;
  for (ChainOp o : chainOpList(t)) {
    if (o != op) return false;
  }
  return true;
}

std::vector<ChainOp> chainOpList(const TevPtr& t) {
  if (!isChain(t)) fail(ErrorKind::Internal, "chainOpList on a non-chain");
  std::vector<ChainOp> ops = t->ops;
  const TevPtr& last = t->operands.back();
  if (isChain(last)) {
    auto nested = chainOpList(last);
    ops.insert(ops.end(), nested.begin(), nested.end());
  }
  return ops;
}

int chainDepth(const TevPtr& t) {
  if (!isChain(t)) return 0;
  return static_cast<int>(chainOpList(t).size());
}

TevPtr flattenChain(const TevPtr& t) {
  if (!isChain(t) || !isChain(t->operands.back())) return t;
  std::vector<TevPtr> operands(t->operands.begin(), t->operands.end() - 1);
  std::vector<ChainOp> ops = t->ops;
  TevPtr inner = flattenChain(t->operands.back());
  operands.insert(operands.end(), inner->operands.begin(), inner->operands.end());
  ops.insert(ops.end(), inner->ops.begin(), inner->ops.end());
  return tevChain(std::move(operands), std::move(ops));
}

bool tevEqual(const TevPtr& a, const TevPtr& b) {
  if (a == b) return true;
  if (!a || !b || a->kind != b->kind || a->shape != b->shape) return false;
  switch (a->kind) {
    case TevKind::Invariant:
      return structurallyEqual(a->inv, b->inv);
    case TevKind::Chain: {
      if (a->ops != b->ops || a->operands.size() != b->operands.size()) return false;
      for (size_t i = 0; i < a->operands.size(); ++i) {
        if (!tevEqual(a->operands[i], b->operands[i])) return false;
      }
      return true;
    }
    case TevKind::Unknown:
      return a->unknownVar == b->unknownVar && a->reason == b->reason;
    case TevKind::Wrap: {
      if (a->wrap != b->wrap || a->factor != b->factor || a->target != b->target ||
          a->perm != b->perm || !(a->spec == b->spec) || a->axis != b->axis ||
          a->children.size() != b->children.size()) {
        return false;
      }
      for (size_t i = 0; i < a->children.size(); ++i) {
        if (!tevEqual(a->children[i], b->children[i])) return false;
      }
      return true;
    }
  }
  return false;
}

std::string renderTev(const TevPtr& t) {
  switch (t->kind) {
    case TevKind::Invariant:
      return renderExpr(t->inv);
    case TevKind::Chain: {
      std::ostringstream os;
      os << "{" << renderTev(t->operands[0]);
      for (size_t i = 0; i < t->ops.size(); ++i) {
        os << ", " << chainOpChar(t->ops[i]) << ", " << renderTev(t->operands[i + 1]);
      }
      os << "}";
      return os.str();
    }
    case TevKind::Unknown:
      return "unknown(" + t->unknownVar + ")";
    case TevKind::Wrap: {
      std::ostringstream os;
      switch (t->wrap) {
        case WrapKind::Reshape: {
          std::string inner = renderTev(t->children[0]);
          if (t->perm) {
            std::ostringstream ps;
            ps << "transpose(" << inner << ", [";
            for (size_t i = 0; i < t->perm->size(); ++i) {
              if (i) ps << ", ";
              ps << (*t->perm)[i];
            }
            ps << "])";
            inner = ps.str();
          }
          if (t->target) {
            std::ostringstream rs;
            rs << "reshape(" << inner << ", [";
            const auto& dims = t->target->dims();
            for (size_t i = 0; i < dims.size(); ++i) {
              if (i) rs << ", ";
              rs << dims[i];
            }
            rs << "])";
            inner = rs.str();
          }
          return inner;
        }
        case WrapKind::Slice:
          os << "slice(" << renderTev(t->children[0]) << ", " << t->spec.str() << ")";
          return os.str();
        case WrapKind::Concat:
          os << "concat(" << renderTev(t->children[0]) << ", " << renderTev(t->children[1])
             << ", " << t->axis << ")";
          return os.str();
        case WrapKind::Broadcast: {
          os << "broadcast(" << renderTev(t->children[0]) << ", [";
          const auto& dims = t->shape.dims();
          for (size_t i = 0; i < dims.size(); ++i) {
            if (i) os << ", ";
            os << dims[i];
          }
          os << "])";
          return os.str();
        }
        case WrapKind::Scale:
          os << "scale(" << formatDouble(t->factor) << ", " << renderTev(t->children[0]) << ")";
          return os.str();
        case WrapKind::Log:
        case WrapKind::Exp:
        case WrapKind::Neg:
          os << wrapKindName(t->wrap) << "(" << renderTev(t->children[0]) << ")";
          return os.str();
        case WrapKind::Add:
        case WrapKind::Sub:
        case WrapKind::Mul:
        case WrapKind::Pow:
          os << wrapKindName(t->wrap) << "(" << renderTev(t->children[0]) << ", "
             << renderTev(t->children[1]) << ")";
          return os.str();
      }
      return "?";
    }
  }
  return "?";
}

// ----- stepwise evaluation --------------------------------------------------

namespace {

// Rolling evaluation state: one row of current suffix values per chain
// node, advanced monotonically in the iteration index.
struct EvalCtx {
  const Bindings& env;
  std::map<const TevExpr*, Tensor> invCache;
  struct ChainState {
    std::vector<Tensor> v;
    int64_t k = -1;
  };
  std::map<const TevExpr*, ChainState> chains;

  explicit EvalCtx(const Bindings& e) : env(e) {}

  Tensor value(const TevExpr* t, int64_t i) {
    switch (t->kind) {
      case TevKind::Invariant: {
        auto it = invCache.find(t);
        if (it != invCache.end()) return it->second;
        Tensor v = evalExpr(t->inv, env);
        invCache.emplace(t, v);
        return v;
      }
      case TevKind::Chain:
        return chainValue(t, i);
      case TevKind::Unknown:
        fail(ErrorKind::CannotEvaluateUnknown,
             "'" + t->unknownVar + "' has no evolution (" + t->reason + ")");
      case TevKind::Wrap:
        return wrapValue(t, i);
    }
    fail(ErrorKind::Internal, "unhandled evolution kind");
  }

  Tensor chainValue(const TevExpr* t, int64_t i) {
    auto& st = chains[t];
    if (st.k > i) st = ChainState{};  // restart for a non-monotonic query
    size_t m = t->ops.size();
    if (st.k < 0) {
      st.v.clear();
      st.v.reserve(m + 1);
      for (size_t j = 0; j < m; ++j) st.v.push_back(value(t->operands[j].get(), 0));
      st.v.push_back(value(t->operands[m].get(), 0));
      st.k = 0;
    }
    while (st.k < i) {
      int64_t next = st.k + 1;
      // Front-to-back, so each level combines with the tail's previous value.
      for (size_t j = 0; j < m; ++j) {
        st.v[j] = elementwiseBinary(chainOpBinary(t->ops[j]), st.v[j], st.v[j + 1]);
      }
      st.v[m] = value(t->operands[m].get(), next);
      st.k = next;
    }
    return st.v[0];
  }

  Tensor wrapValue(const TevExpr* t, int64_t i) {
    switch (t->wrap) {
      case WrapKind::Reshape: {
        Tensor in = value(t->children[0].get(), i);
        if (t->perm) {
          std::vector<int64_t> permuted(t->perm->size());
          for (size_t j = 0; j < t->perm->size(); ++j) {
            permuted[j] = in.shape().extent((*t->perm)[j]);
          }
          in = reshape(in, Shape{std::move(permuted)}, &*t->perm);
        }
        if (t->target) in = reshape(in, *t->target);
        return in;
      }
      case WrapKind::Slice:
        return slice(value(t->children[0].get(), i), t->spec);
      case WrapKind::Concat:
        return concat(value(t->children[0].get(), i), value(t->children[1].get(), i), t->axis);
      case WrapKind::Broadcast:
        return broadcastTo(value(t->children[0].get(), i), t->shape);
      case WrapKind::Log:
        return elementwiseUnary(UnaryOp::Log, value(t->children[0].get(), i));
      case WrapKind::Exp:
        return elementwiseUnary(UnaryOp::Exp, value(t->children[0].get(), i));
      case WrapKind::Neg:
        return elementwiseUnary(UnaryOp::Neg, value(t->children[0].get(), i));
      case WrapKind::Add:
        return elementwiseBinary(BinaryOp::Add, value(t->children[0].get(), i),
                                 value(t->children[1].get(), i));
      case WrapKind::Sub:
        return elementwiseBinary(BinaryOp::Sub, value(t->children[0].get(), i),
                                 value(t->children[1].get(), i));
      case WrapKind::Mul:
        return elementwiseBinary(BinaryOp::Mul, value(t->children[0].get(), i),
                                 value(t->children[1].get(), i));
      case WrapKind::Scale:
        return scale(t->factor, value(t->children[0].get(), i));
      case WrapKind::Pow:
        return power(value(t->children[0].get(), i), value(t->children[1].get(), i));
    }
    fail(ErrorKind::Internal, "unhandled wrap kind");
  }
};

}  // namespace

Tensor evalStep(const TevPtr& t, int64_t i, const Bindings& env) {
  if (i < 0) fail(ErrorKind::NegativeIndex, "iteration index must be non-negative");
  EvalCtx ctx(env);
  return ctx.value(t.get(), i);
}

// ----- closed forms ---------------------------------------------------------

double binomialCoefficient(int64_t n, int k) {
  if (n < 0 || k < 0) fail(ErrorKind::NegativeIndex, "binomial arguments must be non-negative");
  if (k > n) return 0.0;
  if (static_cast<int64_t>(k) > n - static_cast<int64_t>(k)) {
    k = static_cast<int>(n - k);
  }
  // Exact multiply-then-divide (each prefix product of the rising factorial
  // is divisible by t!), guarded against 128-bit overflow.
  constexpr __int128 kGuard = static_cast<__int128>(1) << 90;
  __int128 acc = 1;
  for (int t = 1; t <= k; ++t) {
    if (acc > kGuard) {
      long double r = 1.0L;
      for (int u = 1; u <= k; ++u) {
        r = r * static_cast<long double>(n - u + 1) / static_cast<long double>(u);
      }
      return static_cast<double>(r);
    }
    acc *= (n - t + 1);
    acc /= t;
  }
  return static_cast<double>(acc);
}

namespace {

// Uniform-chain view: flattened invariant operands plus the common op.
struct UniformView {
  std::vector<ExprPtr> operands;
  ChainOp op;
};

UniformView uniformView(const TevPtr& chain) {
  TevPtr flat = flattenChain(chain);
  UniformView view;
  view.op = flat->ops[0];
  for (ChainOp o : flat->ops) {
    if (o != view.op) {
      fail(ErrorKind::MixedOperatorChain,
           "chain mixes '+' and '*' operators: " + renderTev(chain));
    }
  }
  for (const auto& operand : flat->operands) {
    if (isUnknown(operand)) {
      fail(ErrorKind::CannotEvaluateUnknown,
           "'" + operand->unknownVar + "' has no evolution (" + operand->reason + ")");
    }
    if (!isInvariant(operand)) {
      fail(ErrorKind::MixedOperatorChain,
           "chain operand is not loop-invariant: " + renderTev(operand));
    }
    view.operands.push_back(operand->inv);
  }
  return view;
}

}  // namespace

ExprPtr closedFormAt(const TevPtr& t, int64_t i) {
  if (i < 0) fail(ErrorKind::NegativeIndex, "iteration index must be non-negative");
  switch (t->kind) {
    case TevKind::Invariant:
      return t->inv;
    case TevKind::Unknown:
      fail(ErrorKind::CannotEvaluateUnknown,
           "'" + t->unknownVar + "' has no evolution (" + t->reason + ")");
    case TevKind::Wrap: {
      // Structural and element-wise wraps act pointwise in the iteration
      // index, so the closed form pushes through them.
      std::vector<ExprPtr> ch;
      for (const auto& c : t->children) ch.push_back(closedFormAt(c, i));
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
  UniformView view = uniformView(t);
  ExprPtr result;
  for (size_t j = 0; j < view.operands.size(); ++j) {
    double c = binomialCoefficient(i, static_cast<int>(j));
    if (c == 0.0) continue;
    ExprPtr term;
    if (view.op == ChainOp::Add) {
      term = c == 1.0 ? view.operands[j] : eScale(c, view.operands[j]);
      result = result ? eAdd(result, term) : term;
    } else {
      term = c == 1.0 ? view.operands[j]
                      : ePow(view.operands[j], eLit(Tensor::full(t->shape, c)));
      result = result ? eMul(result, term) : term;
    }
  }
  // j = 0 always contributes (C(i,0) = 1), so result is non-null.
  return result;
}

std::string symbolicClosedForm(const TevPtr& t, const std::string& indexName) {
  switch (t->kind) {
    case TevKind::Invariant:
      return renderExpr(t->inv);
    case TevKind::Unknown:
      return "unknown(" + t->unknownVar + ")";
    case TevKind::Wrap:
      return renderTev(t) + " at i=" + indexName;
    case TevKind::Chain:
      break;
  }
  TevPtr flat = flattenChain(t);
  bool uniform = true;
  ChainOp op = flat->ops[0];
  for (ChainOp o : flat->ops) uniform = uniform && o == op;
  for (const auto& operand : flat->operands) uniform = uniform && isInvariant(operand);
  if (!uniform) return renderTev(t) + " at i=" + indexName;
  std::ostringstream os;
  for (size_t j = 0; j < flat->operands.size(); ++j) {
    std::string operand = renderTev(flat->operands[j]);
    if (op == ChainOp::Add) {
      if (j) os << " + ";
      if (j == 0) {
        os << operand;
      } else if (j == 1) {
        os << indexName << "*" << operand;
      } else {
        os << "C(" << indexName << "," << j << ")*" << operand;
      }
    } else {
      if (j) os << " * ";
      if (j == 0) {
        os << operand;
      } else if (j == 1) {
        os << operand << "^" << indexName;
      } else {
        os << operand << "^C(" << indexName << "," << j << ")";
      }
    }
  }
  return os.str();
}

TevPtr advance(const TevPtr& t) {
  switch (t->kind) {
    case TevKind::Invariant:
    case TevKind::Unknown:
      return t;
    case TevKind::Wrap: {
      auto n = std::make_shared<TevExpr>(*t);
      for (auto& c : n->children) c = advance(c);
      return n;
    }
    case TevKind::Chain:
      break;
  }
  TevPtr flat = flattenChain(t);
  size_t m = flat->ops.size();
  std::vector<TevPtr> operands;
  operands.reserve(m + 1);
  for (size_t j = 0; j < m; ++j) {
    const TevPtr& a = flat->operands[j];
    const TevPtr& b = flat->operands[j + 1];
    if (isInvariant(a) && isInvariant(b)) {
      operands.push_back(
          tevInvariant(eBinary(chainOpBinary(flat->ops[j]), a->inv, b->inv), a->shape));
    } else if (isUnknown(a) || isUnknown(b)) {
      return tevUnknown(isUnknown(a) ? a->unknownVar : b->unknownVar, "advance over unknown",
                        t->shape);
    } else {
      fail(ErrorKind::Internal, "advance requires loop-invariant chain operands");
    }
  }
  TevPtr last = flat->operands[m];
  operands.push_back(isChain(last) || isWrap(last) ? advance(last) : last);
  return tevChain(std::move(operands), flat->ops);
}

}  // namespace tev
