#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "tev/codegen.hpp"

namespace tev {

struct VerifyOptions {
  int trials = 200;
  uint64_t seed = 42;
  std::optional<int64_t> tripCountOverride;
  double relTol = 1e-9;
  double absTol = 1e-12;
};

struct VerifyReport {
  bool passed = false;
  int trialsRequested = 0;
  int trialsRun = 0;
  int trialsSkipped = 0;  // inputs on which the original program itself faults
  double maxAbsDeviation = 0.0;
  double maxRelDeviation = 0.0;
  int64_t tripCount = 0;        // trip count being verified
  int64_t oracleTripCount = 0;  // differential runs use this (capped) count
  bool closedFormCrossChecked = false;
  bool positiveInputs = false;  // value profile chosen for the program
  std::string warning;
  std::string failure;  // first mismatch, empty when passed
};

// Trip counts above this run the stepwise oracle at the cap instead, plus a
// closedFormAt-vs-evalStep cross-check at the cap and one full-trip run of
// the optimized program.
inline constexpr int64_t kOracleTripCap = 10000;

// Differential check of the optimizer: runs original and optimized programs
// on `trials` seeded random inputs (integer-valued in [-4,4]; positive in
// [0.5,2] when the program uses log/pow or the analysis produced a '*'
// chain) and compares all returns against relTol/absTol. Zero trials pass
// vacuously with a warning. Throws NotFullyAnalyzable (via codegen) when
// the program cannot be optimized.
VerifyReport verifyProgram(const LoopProgram& p, const VerifyOptions& opts = {});

}  // namespace tev
