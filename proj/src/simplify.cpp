#include "tev/simplify.hpp"

#include <map>
#include <optional>

#include "tev/print.hpp"

namespace tev {

namespace {

bool allEqual(const Tensor& t, double v) {
  for (int64_t i = 0; i < t.size(); ++i) {
    if (t.at(i) != v) return false;
  }
  return true;
}

// May evaluating this expression raise a runtime error (log domain,
// pow domain)? Guards value-level folds that would otherwise drop the
// failing operand.
bool mayFault(const ExprPtr& e) {
  if (e->kind == ExprKind::Unary && e->uop == UnaryOp::Log) return true;
  if (e->kind == ExprKind::Pow) return true;
  for (const auto& a : e->args) {
    if (mayFault(a)) return true;
  }
  return false;
}

class Simplifier {
 public:
  explicit Simplifier(const ShapeEnv& env) : env_(env) {}

  ExprPtr run(const ExprPtr& e) { return simplify(e); }

 private:
  const ShapeEnv& env_;

  Shape shapeOf(const ExprPtr& e) { return inferShape(e, env_); }

  static bool isLiteral(const ExprPtr& e) {
    return e->kind == ExprKind::Lit || e->kind == ExprKind::Zeros || e->kind == ExprKind::Ones;
  }

  // Zeros/Ones for recognizable constants (rank >= 1), bare Lit otherwise.
  static ExprPtr canonicalLiteral(const Tensor& t) {
    if (t.shape().rank() > 0 && t.size() > 0) {
      if (allEqual(t, 0.0)) return eZeros(t.shape());
      if (allEqual(t, 1.0)) return eOnes(t.shape());
    }
    return eLit(t);
  }

  // ----- additive structure -------------------------------------------------

  struct Terms {
    // render key -> (coefficient, atom); atoms are canonical non-additive
    std::map<std::string, std::pair<double, ExprPtr>> atoms;
    std::optional<Tensor> lit;

    void addLit(double coeff, const Tensor& t) {
      Tensor scaled = coeff == 1.0 ? t : scale(coeff, t);
      lit = lit ? elementwiseBinary(BinaryOp::Add, *lit, scaled) : scaled;
    }

    void addAtom(double coeff, ExprPtr atom) {
      std::string key = renderExpr(atom);
      auto it = atoms.find(key);
      if (it == atoms.end()) {
        atoms.emplace(key, std::make_pair(coeff, std::move(atom)));
      } else {
        it->second.first += coeff;
      }
    }
  };

  void collect(const ExprPtr& e, double coeff, Terms& out, bool canonical) {
    switch (e->kind) {
      case ExprKind::Binary:
        if (e->bop == BinaryOp::Add) {
          collect(e->args[0], coeff, out, canonical);
          collect(e->args[1], coeff, out, canonical);
          return;
        }
        if (e->bop == BinaryOp::Sub) {
          collect(e->args[0], coeff, out, canonical);
          collect(e->args[1], -coeff, out, canonical);
          return;
        }
        break;
      case ExprKind::Unary:
        if (e->uop == UnaryOp::Neg) {
          collect(e->args[0], -coeff, out, canonical);
          return;
        }
        break;
      case ExprKind::Scale:
        collect(e->args[0], coeff * e->factor, out, canonical);
        return;
      case ExprKind::Lit:
        out.addLit(coeff, e->lit);
        return;
      case ExprKind::Zeros:
        return;  // adds nothing
      case ExprKind::Ones:
        out.addLit(coeff, Tensor::ones(e->shape));
        return;
      default:
        break;
    }
    if (canonical) {
      out.addAtom(coeff, e);
      return;
    }
    ExprPtr atom = simplify(e);
    switch (atom->kind) {
      case ExprKind::Scale:
      case ExprKind::Lit:
      case ExprKind::Zeros:
      case ExprKind::Ones:
        collect(atom, coeff, out, true);
        return;
      case ExprKind::Binary:
        if (atom->bop == BinaryOp::Add) {
          collect(atom, coeff, out, true);
          return;
        }
        break;
      default:
        break;
    }
    out.addAtom(coeff, std::move(atom));
  }

  ExprPtr rebuildSum(Terms& terms, const Shape& shape) {
    if (terms.lit) terms.addAtom(1.0, canonicalLiteral(*terms.lit));
    ExprPtr result;
    for (const auto& [key, entry] : terms.atoms) {
      (void)key;
      double c = entry.first;
      if (c == 0.0) continue;
      const ExprPtr& atom = entry.second;
      if (atom->kind == ExprKind::Zeros) continue;
      ExprPtr term = c == 1.0 ? atom : eScale(c, atom);
      result = result ? eAdd(result, term) : term;
    }
    if (!result) {
      return shape.rank() == 0 ? eScalar(0.0) : eZeros(shape);
    }
    return result;
  }

  // ----- multiplicative structure -------------------------------------------

  struct Factors {
    double coeff = 1.0;
    std::optional<Tensor> lit;
    std::map<std::string, ExprPtr> atoms;  // key -> atom (duplicates kept via key suffix)
    int dupCounter = 0;

    void mulLit(const Tensor& t) {
      lit = lit ? elementwiseBinary(BinaryOp::Mul, *lit, t) : t;
    }

    void addFactor(ExprPtr atom) {
      std::string key = renderExpr(atom);
      while (atoms.count(key)) key += "\x01";  // keep repeated factors, stable order
      atoms.emplace(std::move(key), std::move(atom));
    }
  };

  void collectFactors(const ExprPtr& e, Factors& out, bool canonical) {
    switch (e->kind) {
      case ExprKind::Binary:
        if (e->bop == BinaryOp::Mul) {
          collectFactors(e->args[0], out, canonical);
          collectFactors(e->args[1], out, canonical);
          return;
        }
        break;
      case ExprKind::Unary:
        if (e->uop == UnaryOp::Neg) {
          out.coeff = -out.coeff;
          collectFactors(e->args[0], out, canonical);
          return;
        }
        break;
      case ExprKind::Scale:
        out.coeff *= e->factor;
        collectFactors(e->args[0], out, canonical);
        return;
      case ExprKind::Lit:
        out.mulLit(e->lit);
        return;
      case ExprKind::Zeros:
        out.mulLit(Tensor::zeros(e->shape));
        return;
      case ExprKind::Ones:
        out.mulLit(Tensor::ones(e->shape));
        return;
      default:
        break;
    }
    if (canonical) {
      out.addFactor(e);
      return;
    }
    ExprPtr atom = simplify(e);
    switch (atom->kind) {
      case ExprKind::Scale:
      case ExprKind::Lit:
      case ExprKind::Zeros:
      case ExprKind::Ones:
        collectFactors(atom, out, true);
        return;
      case ExprKind::Binary:
        if (atom->bop == BinaryOp::Mul) {
          collectFactors(atom, out, true);
          return;
        }
        break;
      case ExprKind::Unary:
        if (atom->uop == UnaryOp::Neg) {
          collectFactors(atom, out, true);
          return;
        }
        break;
      default:
        break;
    }
    out.addFactor(std::move(atom));
  }

  ExprPtr rebuildProduct(Factors& f, const Shape& shape) {
    bool faultFree = true;
    ExprPtr product;
    for (const auto& [key, atom] : f.atoms) {
      (void)key;
      if (mayFault(atom)) faultFree = false;
      product = product ? eMul(product, atom) : atom;
    }
    if (f.lit && allEqual(*f.lit, 0.0) && faultFree) {
      // zero annihilates; only safe when no dropped factor can fault
      return shape.rank() == 0 ? eScalar(0.0) : eZeros(shape);
    }
    if (f.lit && !allEqual(*f.lit, 1.0)) {
      ExprPtr litNode = canonicalLiteral(*f.lit);
      product = product ? eMul(product, litNode) : litNode;
    }
    if (!product) {
      // literal-only product (possibly all-ones)
      Tensor base = f.lit ? *f.lit : Tensor::ones(shape);
      return canonicalLiteral(f.coeff == 1.0 ? base : scale(f.coeff, base));
    }
    if (f.coeff == 1.0) return product;
    if (isLiteral(product)) {
      Tensor t = *litValueOf(*product);
      return canonicalLiteral(scale(f.coeff, t));
    }
    return eScale(f.coeff, product);
  }

  // ----- structural distribution --------------------------------------------

  ExprPtr applyStructural(const ExprPtr& inner, const ExprPtr& child) {
    switch (inner->kind) {
      case ExprKind::Reshape:
        return eReshapePerm(child, inner->target, inner->perm);
      case ExprKind::Slice:
        return eSlice(child, inner->spec);
      case ExprKind::Broadcast:
        return eBroadcast(child, inner->shape);
      default:
        fail(ErrorKind::Internal, "not a structural node");
    }
  }

  Tensor evalStructuralOnLiteral(const ExprPtr& node, const Tensor& value) {
    switch (node->kind) {
      case ExprKind::Reshape: {
        Tensor v = value;
        if (node->perm) {
          std::vector<int64_t> permuted(node->perm->size());
          for (size_t i = 0; i < node->perm->size(); ++i) {
            permuted[i] = v.shape().extent((*node->perm)[i]);
          }
          v = reshape(v, Shape{std::move(permuted)}, &*node->perm);
        }
        if (node->target) v = reshape(v, *node->target);
        return v;
      }
      case ExprKind::Slice:
        return slice(value, node->spec);
      case ExprKind::Broadcast:
        return broadcastTo(value, node->shape);
      default:
        fail(ErrorKind::Internal, "not a structural node");
    }
  }

  ExprPtr simplifyStructural(const ExprPtr& e) {
    ExprPtr child = simplify(e->args[0]);
    if (isLiteral(child)) {
      return canonicalLiteral(evalStructuralOnLiteral(e, *litValueOf(*child)));
    }
    if (child->kind == ExprKind::Scale) {
      return simplify(eScale(child->factor, applyStructural(e, child->args[0])));
    }
    if (child->kind == ExprKind::Binary && child->bop == BinaryOp::Add) {
      return simplify(
          eAdd(applyStructural(e, child->args[0]), applyStructural(e, child->args[1])));
    }
    // rebuild with the simplified child
    return applyStructural(e, child);
  }

  // ----- dispatch -------------------------------------------------------------

  ExprPtr simplify(const ExprPtr& e) {
    switch (e->kind) {
      case ExprKind::Var:
        return e;
      case ExprKind::Lit:
        return canonicalLiteral(e->lit);
      case ExprKind::Zeros:
      case ExprKind::Ones:
        return e;
      case ExprKind::Binary: {
        if (e->bop == BinaryOp::Mul) {
          Factors f;
          collectFactors(e, f, false);
          return rebuildProduct(f, shapeOf(e));
        }
        Terms t;
        collect(e, 1.0, t, false);
        return rebuildSum(t, shapeOf(e));
      }
      case ExprKind::Unary: {
        if (e->uop == UnaryOp::Neg) {
          Terms t;
          collect(e, 1.0, t, false);
          return rebuildSum(t, shapeOf(e));
        }
        ExprPtr child = simplify(e->args[0]);
        if (isLiteral(child)) {
          try {
            return canonicalLiteral(elementwiseUnary(e->uop, *litValueOf(*child)));
          } catch (const Error&) {
            // e.g. log of a non-positive literal: preserve the faulting node
          }
        }
        return eUnary(e->uop, child);
      }
      case ExprKind::Scale: {
        Terms t;
        collect(e, 1.0, t, false);
        return rebuildSum(t, shapeOf(e));
      }
      case ExprKind::Pow: {
        ExprPtr base = simplify(e->args[0]);
        ExprPtr exponent = simplify(e->args[1]);
        if (isLiteral(exponent)) {
          Tensor ev = *litValueOf(*exponent);
          if (allEqual(ev, 1.0)) return base;
          if (allEqual(ev, 0.0) && !mayFault(base)) {
            Shape s = shapeOf(e);
            return s.rank() == 0 ? eScalar(1.0) : eOnes(s);
          }
        }
        if (isLiteral(base) && isLiteral(exponent)) {
          try {
            return canonicalLiteral(power(*litValueOf(*base), *litValueOf(*exponent)));
          } catch (const Error&) {
          }
        }
        return ePow(base, exponent);
      }
      case ExprKind::Reshape:
      case ExprKind::Slice:
      case ExprKind::Broadcast:
        return simplifyStructural(e);
      case ExprKind::Concat: {
        ExprPtr a = simplify(e->args[0]);
        ExprPtr b = simplify(e->args[1]);
        if (isLiteral(a) && isLiteral(b)) {
          return canonicalLiteral(concat(*litValueOf(*a), *litValueOf(*b), e->axis));
        }
        return eConcat(a, b, e->axis);
      }
    }
    return e;
  }
};

}  // namespace

ExprPtr simplifyInvariant(const ExprPtr& e, const ShapeEnv& env) {
  return Simplifier(env).run(e);
}

}  // namespace tev
