#pragma once

#include "tev/analysis.hpp"

namespace tev {

// Emits a loop-free program with the same parameters and return arity that
// computes every return value from the analyzed closed forms. Loop-body
// variables consumed after the loop become fresh `<name>_exit` definitions;
// repeated non-trivial subexpressions are hoisted into shared temporaries.
// Throws NotFullyAnalyzable when any consumed variable lacks an exit value,
// listing the blocking variables and reasons; callers may fall back to the
// original program. A loop-free input is returned unchanged.
LoopProgram emitOptimizedProgram(const LoopProgram& p, const AnalysisResult& r);

}  // namespace tev
