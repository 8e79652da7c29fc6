#include "tev/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "tev/error.hpp"
#include "tev/interp.hpp"
#include "tev/print.hpp"

namespace tev {

namespace {

bool exprUsesLogOrPow(const ExprPtr& e) {
  if (e->kind == ExprKind::Pow) return true;
  if (e->kind == ExprKind::Unary && e->uop == UnaryOp::Log) return true;
  return std::any_of(e->args.begin(), e->args.end(), exprUsesLogOrPow);
}

bool tevUsesMulChainOrFault(const TevPtr& t) {
  if (isChain(t)) {
    for (ChainOp op : t->ops) {
      if (op == ChainOp::Mul) return true;
    }
    return std::any_of(t->operands.begin(), t->operands.end(), tevUsesMulChainOrFault);
  }
  if (isWrap(t)) {
    if (t->wrap == WrapKind::Log || t->wrap == WrapKind::Pow) return true;
    return std::any_of(t->children.begin(), t->children.end(), tevUsesMulChainOrFault);
  }
  if (isInvariant(t)) return exprUsesLogOrPow(t->inv);
  return false;
}

// Positive inputs keep log/pow well-defined and multiplicative chains free
// of sign cancellation; everything else gets exact small integers.
bool wantsPositiveInputs(const LoopProgram& p, const AnalysisResult& r) {
  auto stmtsUse = [](const std::vector<Stmt>& stmts) {
    return std::any_of(stmts.begin(), stmts.end(),
                       [](const Stmt& s) { return exprUsesLogOrPow(s.value); });
  };
  if (stmtsUse(p.preStmts) || stmtsUse(p.postStmts)) return true;
  if (p.loop && stmtsUse(p.loop->body)) return true;
  for (const auto& [name, tev] : r.perVariable) {
    (void)name;
    if (tevUsesMulChainOrFault(tev)) return true;
  }
  for (const auto& [name, e] : r.exitValues) {
    (void)name;
    if (exprUsesLogOrPow(e)) return true;
  }
  return false;
}

Bindings randomBindings(std::mt19937_64& rng, const std::vector<Param>& params,
                        bool positive) {
  Bindings b;
  for (const Param& p : params) {
    std::vector<double> data(static_cast<size_t>(p.shape.elementCount()));
    if (positive) {
      std::uniform_real_distribution<double> d(0.5, 2.0);
      for (double& v : data) v = d(rng);
    } else {
      std::uniform_int_distribution<int> d(-4, 4);
      for (double& v : data) v = static_cast<double>(d(rng));
    }
    b.emplace(p.name, Tensor(p.shape, std::move(data)));
  }
  return b;
}

// Accumulates elementwise deviations; returns false on the first pair that
// violates the tolerances.
bool compareReturns(const Tensor& want, const Tensor& got, double relTol, double absTol,
                    double& maxAbs, double& maxRel) {
  const auto& a = want.data();
  const auto& g = got.data();
  if (want.shape() != got.shape()) return false;
  for (size_t j = 0; j < a.size(); ++j) {
    double diff = std::abs(a[j] - g[j]);
    if (std::isnan(diff)) return false;
    double mag = std::max(std::abs(a[j]), std::abs(g[j]));
    maxAbs = std::max(maxAbs, diff);
    if (mag > 0) maxRel = std::max(maxRel, diff / mag);
    if (diff > absTol + relTol * std::abs(a[j])) return false;
  }
  return true;
}

// Bindings extended with the pre-loop statement values, so chain operand
// expressions (which may reference pre-loop names) can be evaluated.
Bindings withPreStmts(const LoopProgram& p, const Bindings& inputs) {
  Bindings env = inputs;
  for (const Stmt& s : p.preStmts) env.insert_or_assign(s.name, evalExpr(s.value, env));
  return env;
}

}  // namespace

VerifyReport verifyProgram(const LoopProgram& p, const VerifyOptions& opts) {
  LoopProgram program = p;
  if (opts.tripCountOverride && program.loop) {
    program.loop->tripCount = *opts.tripCountOverride;
  }

  VerifyReport report;
  report.trialsRequested = opts.trials;
  report.tripCount = program.loop ? program.loop->tripCount : 0;

  AnalysisResult analysis = analyzeLoop(program);
  LoopProgram optimized = emitOptimizedProgram(program, analysis);
  report.positiveInputs = wantsPositiveInputs(program, analysis);

  // The stepwise oracle is O(tripCount); past the cap, compare at the cap
  // and additionally cross-check the closed forms and run the optimized
  // program at the full count.
  bool capped = report.tripCount > kOracleTripCap;
  LoopProgram oracleProgram = program;
  LoopProgram oracleOptimized = optimized;
  if (capped) {
    oracleProgram.loop->tripCount = kOracleTripCap;
    oracleOptimized = emitOptimizedProgram(oracleProgram, analyzeLoop(oracleProgram));
  }
  report.oracleTripCount = oracleProgram.loop ? oracleProgram.loop->tripCount : 0;

  if (opts.trials == 0) {
    report.passed = true;
    report.warning = "0 trials requested; the comparison is vacuous";
    return report;
  }

  std::mt19937_64 rng(opts.seed);
  for (int trial = 0; trial < opts.trials; ++trial) {
    Bindings inputs = randomBindings(rng, program.params, report.positiveInputs);

    RunResult want;
    try {
      want = runProgram(oracleProgram, inputs);
    } catch (const Error&) {
      report.trialsSkipped++;  // the original program faults on these inputs
      continue;
    }
    RunResult got;
    try {
      got = runProgram(oracleOptimized, inputs);
    } catch (const Error& e) {
      report.failure = "trial " + std::to_string(trial) +
                       ": optimized program faulted where the original did not: " + e.what();
      return report;
    }
    report.trialsRun++;

    if (want.returns.size() != got.returns.size()) {
      report.failure = "trial " + std::to_string(trial) + ": return arity differs";
      return report;
    }
    for (size_t j = 0; j < want.returns.size(); ++j) {
      if (!compareReturns(want.returns[j], got.returns[j], opts.relTol, opts.absTol,
                          report.maxAbsDeviation, report.maxRelDeviation)) {
        report.failure = "trial " + std::to_string(trial) + ", return " + std::to_string(j) +
                         ": values diverge beyond relTol " + formatDouble(opts.relTol) +
                         " / absTol " + formatDouble(opts.absTol);
        return report;
      }
    }

    if (capped && trial == 0) {
      // Cross-check chain semantics at the cap: stepwise evaluation of each
      // evolution must match its closed form.
      Bindings env = withPreStmts(program, inputs);
      AnalysisResult cappedAnalysis = analyzeLoop(oracleProgram);
      for (const auto& [name, tev] : cappedAnalysis.perVariable) {
        if (isUnknown(tev)) continue;
        Tensor stepwise;
        Tensor closed;
        try {
          stepwise = evalStep(tev, kOracleTripCap, env);
          closed = evalExpr(closedFormAt(tev, kOracleTripCap), env);
        } catch (const Error&) {
          continue;  // mixed chains have no closed form to cross-check
        }
        if (!allClose(stepwise, closed, opts.relTol, opts.absTol)) {
          report.failure = "closed form of '" + name + "' disagrees with stepwise evaluation at i=" +
                           std::to_string(kOracleTripCap);
          return report;
        }
        report.closedFormCrossChecked = true;
      }
      // The full-trip optimized program must execute (loop-free, O(1) in
      // the trip count); its value has no tractable oracle to compare to.
      (void)runProgram(optimized, inputs);
    }
  }

  if (report.trialsRun == 0) {
    report.warning = "all " + std::to_string(report.trialsSkipped) +
                     " trials faulted in the original program; the comparison is vacuous";
  }
  report.passed = true;
  return report;
}

}  // namespace tev
