#include "tev/print.hpp"

#include <sstream>

namespace tev {

namespace {

std::string joinInts(const std::vector<int64_t>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    os << v[i];
  }
  return os.str();
}

std::string bracketShape(const Shape& s) { return "[" + joinInts(s.dims()) + "]"; }

std::string tensorLiteralText(const Tensor& t) {
  if (t.shape().rank() == 0) return formatDouble(t.at(0));
  std::ostringstream os;
  os << "tensor" << t.shape().str() << "[";
  for (int64_t i = 0; i < t.size(); ++i) {
    if (i) os << ", ";
    os << formatDouble(t.at(i));
  }
  os << "]";
  return os.str();
}

}  // namespace

std::string renderExpr(const ExprPtr& e) {
  switch (e->kind) {
    case ExprKind::Var:
      return e->var;
    case ExprKind::Lit:
      return tensorLiteralText(e->lit);
    case ExprKind::Zeros:
      return "zeros(" + bracketShape(e->shape) + ")";
    case ExprKind::Ones:
      return "ones(" + bracketShape(e->shape) + ")";
    case ExprKind::Binary:
      return std::string(binaryOpName(e->bop)) + "(" + renderExpr(e->args[0]) + ", " +
             renderExpr(e->args[1]) + ")";
    case ExprKind::Unary:
      return std::string(unaryOpName(e->uop)) + "(" + renderExpr(e->args[0]) + ")";
    case ExprKind::Scale:
      return "scale(" + formatDouble(e->factor) + ", " + renderExpr(e->args[0]) + ")";
    case ExprKind::Pow:
      return "pow(" + renderExpr(e->args[0]) + ", " + renderExpr(e->args[1]) + ")";
    case ExprKind::Reshape: {
      std::string inner = renderExpr(e->args[0]);
      if (e->perm) {
        std::ostringstream os;
        os << "transpose(" << inner << ", [";
        for (size_t i = 0; i < e->perm->size(); ++i) {
          if (i) os << ", ";
          os << (*e->perm)[i];
        }
        os << "])";
        inner = os.str();
      }
      if (e->target) inner = "reshape(" + inner + ", " + bracketShape(*e->target) + ")";
      return inner;
    }
    case ExprKind::Slice: {
      std::ostringstream os;
      os << "slice(" << renderExpr(e->args[0]) << ", [";
      for (size_t i = 0; i < e->spec.ranges.size(); ++i) {
        if (i) os << ", ";
        os << e->spec.ranges[i].start << ":" << e->spec.ranges[i].stop;
      }
      os << "])";
      return os.str();
    }
    case ExprKind::Concat:
      return "concat(" + renderExpr(e->args[0]) + ", " + renderExpr(e->args[1]) + ", " +
             std::to_string(e->axis) + ")";
    case ExprKind::Broadcast:
      return "broadcast(" + renderExpr(e->args[0]) + ", " + bracketShape(e->shape) + ")";
  }
  return "?";
}

std::string serializeProgram(const LoopProgram& p) {
  std::ostringstream os;
  os << "func " << p.name << "(";
  for (size_t i = 0; i < p.params.size(); ++i) {
    if (i) os << ", ";
    os << p.params[i].name << ": tensor" << p.params[i].shape.str();
  }
  os << ") {\n";
  for (const auto& s : p.preStmts) os << "  " << s.name << " = " << renderExpr(s.value) << "\n";
  if (p.loop) {
    os << "  for " << p.loop->counter << " in 0.." << p.loop->tripCount << " {\n";
    for (const auto& s : p.loop->body) {
      os << "    " << s.name << " = " << renderExpr(s.value) << "\n";
    }
    os << "  }\n";
  }
  for (const auto& s : p.postStmts) os << "  " << s.name << " = " << renderExpr(s.value) << "\n";
  os << "  return ";
  for (size_t i = 0; i < p.returns.size(); ++i) {
    if (i) os << ", ";
    os << p.returns[i];
  }
  os << "\n}\n";
  return os.str();
}

nlohmann::json exprToJson(const ExprPtr& e) {
  nlohmann::json j;
  switch (e->kind) {
    case ExprKind::Var:
      j["op"] = "var";
      j["name"] = e->var;
      return j;
    case ExprKind::Lit:
      j["op"] = "lit";
      j["tensor"] = tensorToJson(e->lit);
      return j;
    case ExprKind::Zeros:
      j["op"] = "zeros";
      j["shape"] = e->shape.dims();
      return j;
    case ExprKind::Ones:
      j["op"] = "ones";
      j["shape"] = e->shape.dims();
      return j;
    case ExprKind::Binary:
      j["op"] = binaryOpName(e->bop);
      break;
    case ExprKind::Unary:
      j["op"] = unaryOpName(e->uop);
      break;
    case ExprKind::Scale:
      j["op"] = "scale";
      j["factor"] = e->factor;
      break;
    case ExprKind::Pow:
      j["op"] = "pow";
      break;
    case ExprKind::Reshape:
      j["op"] = e->perm && !e->target ? "transpose" : "reshape";
      if (e->target) j["shape"] = e->target->dims();
      if (e->perm) j["perm"] = *e->perm;
      break;
    case ExprKind::Slice: {
      j["op"] = "slice";
      nlohmann::json ranges = nlohmann::json::array();
      for (const auto& r : e->spec.ranges) ranges.push_back({r.start, r.stop});
      j["ranges"] = ranges;
      break;
    }
    case ExprKind::Concat:
      j["op"] = "concat";
      j["axis"] = e->axis;
      break;
    case ExprKind::Broadcast:
      j["op"] = "broadcast";
      j["shape"] = e->shape.dims();
      break;
  }
  nlohmann::json args = nlohmann::json::array();
  for (const auto& a : e->args) args.push_back(exprToJson(a));
  j["args"] = args;
  return j;
}

nlohmann::json programToJson(const LoopProgram& p) {
  nlohmann::json j;
  j["name"] = p.name;
  nlohmann::json params = nlohmann::json::array();
  for (const auto& prm : p.params) {
    params.push_back({{"name", prm.name}, {"shape", prm.shape.dims()}});
  }
  j["params"] = params;
  auto stmts = [](const std::vector<Stmt>& ss) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : ss) arr.push_back({{"name", s.name}, {"value", exprToJson(s.value)}});
    return arr;
  };
  j["preStmts"] = stmts(p.preStmts);
  if (p.loop) {
    j["loop"] = {{"counter", p.loop->counter},
                 {"tripCount", p.loop->tripCount},
                 {"body", stmts(p.loop->body)}};
  } else {
    j["loop"] = nullptr;
  }
  j["postStmts"] = stmts(p.postStmts);
  j["returns"] = p.returns;
  return j;
}

nlohmann::json tensorToJson(const Tensor& t) {
  nlohmann::json j;
  j["shape"] = t.shape().dims();
  nlohmann::json data = nlohmann::json::array();
  for (int64_t i = 0; i < t.size(); ++i) data.push_back(t.at(i));
  j["data"] = data;
  return j;
}

Tensor tensorFromJson(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
    fail(ErrorKind::SyntaxError, "tensor JSON must be {\"shape\":[...],\"data\":[...]}");
  }
  std::vector<int64_t> dims = j.at("shape").get<std::vector<int64_t>>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Tensor(Shape{std::move(dims)}, std::move(data));
}

std::map<std::string, Tensor> bindingsFromJson(const nlohmann::json& j) {
  if (!j.is_object()) fail(ErrorKind::SyntaxError, "bindings JSON must be an object");
  std::map<std::string, Tensor> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    out.emplace(it.key(), tensorFromJson(it.value()));
  }
  return out;
}

nlohmann::json bindingsToJson(const std::map<std::string, Tensor>& bindings) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [name, t] : bindings) j[name] = tensorToJson(t);
  return j;
}

}  // namespace tev
