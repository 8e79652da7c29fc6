#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "tev/ir.hpp"

namespace tev {

// Textual form of one expression in the IR's surface syntax.
std::string renderExpr(const ExprPtr& e);

// Textual form of a whole program; parseProgram(serializeProgram(p)) is
// structurally equal to p.
std::string serializeProgram(const LoopProgram& p);

nlohmann::json exprToJson(const ExprPtr& e);
nlohmann::json programToJson(const LoopProgram& p);

// {"shape":[d0,...],"data":[flat row-major floats]}
nlohmann::json tensorToJson(const Tensor& t);
Tensor tensorFromJson(const nlohmann::json& j);

// Bindings file: object mapping parameter name -> tensor object.
std::map<std::string, Tensor> bindingsFromJson(const nlohmann::json& j);
nlohmann::json bindingsToJson(const std::map<std::string, Tensor>& bindings);

}  // namespace tev
