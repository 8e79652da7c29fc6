#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tev/rewrite.hpp"

namespace tev {

enum class VarRole {
  LoopCarried,  // read at or before its first body assignment; value crosses iterations
  Derived,      // straight-line value recomputed each iteration
};

struct AnalysisResult {
  // Evolution of every analyzable loop-body variable as a function of the
  // 0-based iteration counter i. For a loop-carried variable the entry is
  // its value at the START of iteration i (header convention); for a
  // derived variable it is the value right after its last assignment in
  // iteration i. Every body-assigned variable appears in exactly one of
  // perVariable or failures.
  std::map<std::string, TevPtr> perVariable;
  std::map<std::string, VarRole> roles;  // every body-assigned variable
  std::map<std::string, std::string> failures;  // variable -> reason

  // Loop-invariant expressions for the value each variable holds after the
  // loop finishes; present only when the evolution is closed-form-evaluable
  // (or unrollable within the cap). exitFailures records why the rest are
  // absent.
  std::map<std::string, ExprPtr> exitValues;
  std::map<std::string, std::string> exitFailures;

  RewriteTrace trace;  // concatenated rule applications, in analysis order
  int64_t tripCount = 0;
  std::vector<std::string> loopCarried;  // order of first body assignment
};

// Analyzes the (validated) program's loop. Total: failures are recorded,
// never thrown. A program without a loop yields an empty result.
AnalysisResult analyzeLoop(const LoopProgram& p);

// Stepwise-unroll cap for exit values of chains with no uniform closed form.
inline constexpr int64_t kMaxUnrollForExit = 64;

// Value of one variable after `tripCount` iterations, as a loop-invariant
// expression: the header value at i = tripCount for a loop-carried
// variable, the last assigned value (i = tripCount - 1) for a derived one.
// Throws NoTevAvailable when the variable has no evolution (or a derived
// variable when the loop never ran) and MixedChainTooLong when a
// non-uniform chain would need more than kMaxUnrollForExit stepwise
// iterations.
ExprPtr exitValue(const AnalysisResult& r, const std::string& varName, int64_t tripCount,
                  const ShapeEnv& env = {});

}  // namespace tev
