#pragma once

#include <map>
#include <string>
#include <vector>

#include "tev/ir.hpp"

namespace tev {

// Parameter name -> tensor value. Shapes must match the declaration exactly.
using Bindings = std::map<std::string, Tensor>;

struct RunResult {
  std::vector<Tensor> returns;
  // Per loop-carried variable: its value at the start of each iteration,
  // in iteration order; length equals the trip count. Populated only when
  // recordHeaders is requested.
  std::map<std::string, std::vector<Tensor>> headerLog;
};

// Evaluates one expression under an environment of named tensors.
Tensor evalExpr(const ExprPtr& e, const Bindings& env);

// Naive reference execution: pre-statements, tripCount body iterations in
// statement order, post-statements, then the named returns. No algebraic
// simplification of any kind happens here; this is the ground-truth oracle
// the analyzer and code generator are tested against.
RunResult runProgram(const LoopProgram& p, const Bindings& env, bool recordHeaders = false);

}  // namespace tev
