#include "tev/interp.hpp"

#include <gtest/gtest.h>

#include <random>

#include "support/testutil.hpp"
#include "tev/parse.hpp"

using namespace tev;
using tev::testing::accumulateSource;
using tev::testing::mat2;
using tev::testing::randomTensor;
using tev::testing::rowRunningSumSource;
using tev::testing::vec;

TEST(EvalExpr, CoversEveryOperator) {
  Bindings env{{"a", mat2({1, 2, 3, 4, 5, 6}, 2, 3)}, {"v", vec({1, 2, 3})}};
  EXPECT_EQ(evalExpr(eAdd(eVar("v"), eVar("v")), env), vec({2, 4, 6}));
  EXPECT_EQ(evalExpr(eScale(2.0, eVar("v")), env), vec({2, 4, 6}));
  EXPECT_EQ(evalExpr(eNeg(eVar("v")), env), vec({-1, -2, -3}));
  EXPECT_EQ(evalExpr(ePow(eVar("v"), eLit(vec({2, 2, 2}))), env), vec({1, 4, 9}));
  EXPECT_EQ(evalExpr(eReshape(eVar("a"), Shape{6}), env), vec({1, 2, 3, 4, 5, 6}));
  EXPECT_EQ(evalExpr(eTranspose(eVar("a"), {1, 0}), env), mat2({1, 4, 2, 5, 3, 6}, 3, 2));
  EXPECT_EQ(evalExpr(eSlice(eVar("a"), SliceSpec{{{1, 2}, {0, 3}}}), env),
            mat2({4, 5, 6}, 1, 3));
  EXPECT_EQ(evalExpr(eConcat(eVar("v"), eVar("v"), 0), env), vec({1, 2, 3, 1, 2, 3}));
  EXPECT_EQ(evalExpr(eBroadcast(eVar("v"), Shape{2, 3}), env),
            mat2({1, 2, 3, 1, 2, 3}, 2, 3));
  EXPECT_EQ(evalExpr(eZeros(Shape{2}), env), vec({0, 0}));
  EXPECT_EQ(evalExpr(eOnes(Shape{2}), env), vec({1, 1}));
}

TEST(EvalExpr, UnboundVariableFails) {
  try {
    evalExpr(eVar("nope"), {});
    FAIL() << "expected UnboundVariable";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnboundVariable);
  }
}

TEST(RunProgram, AccumulateFifteenSteps) {
  LoopProgram p = parseProgram(accumulateSource());
  // Each of the 15 iterations adds a; from zeros that lands exactly on 15*a.
  RunResult r = runProgram(p, {{"x", Tensor::zeros(Shape{2})}, {"a", Tensor::ones(Shape{2})}});
  ASSERT_EQ(r.returns.size(), 1u);
  EXPECT_EQ(r.returns[0], vec({15, 15}));

  RunResult r2 = runProgram(p, {{"x", vec({10, -3})}, {"a", vec({2, 0.5})}});
  EXPECT_EQ(r2.returns[0], vec({10 + 15 * 2.0, -3 + 15 * 0.5}));
}

TEST(RunProgram, RowRunningSumOracle) {
  // Hand-derived: x(i) = x0 + i*a, so row1(x) after the add in iteration i is
  // row1(x0) + (i+1)*row1(a); summing over i = 0..14 gives
  // 15*row1(x0) + 120*row1(a). With x0 row1 = [4,5,6] and a = ones:
  // [60,75,90] + [120,120,120] = [180,195,210].
  LoopProgram p = parseProgram(rowRunningSumSource());
  Bindings env{{"x", mat2({1, 2, 3, 4, 5, 6}, 2, 3)},
               {"a", Tensor::ones(Shape{2, 3})},
               {"y", Tensor::zeros(Shape{3})}};
  RunResult r = runProgram(p, env);
  ASSERT_EQ(r.returns.size(), 1u);
  EXPECT_EQ(r.returns[0], vec({180, 195, 210}));
}

TEST(RunProgram, ZeroTripLoopLeavesParamsUntouched) {
  LoopProgram p = parseProgram(R"(func f(x: tensor<2>, a: tensor<2>) {
  for i in 0..0 {
    x = add(x, a)
  }
  return x
}
)");
  RunResult r = runProgram(p, {{"x", vec({7, 8})}, {"a", vec({100, 100})}});
  EXPECT_EQ(r.returns[0], vec({7, 8}));
}

TEST(RunProgram, ZeroTripDerivedReturnFails) {
  // z only ever gets a value inside the body; with no iterations the return
  // reads an unassigned name.
  LoopProgram p = parseProgram(R"(func f(x: tensor<2>, a: tensor<2>) {
  for i in 0..0 {
    x = add(x, a)
    z = add(x, x)
  }
  return z
}
)");
  try {
    runProgram(p, {{"x", vec({1, 2})}, {"a", vec({1, 1})}});
    FAIL() << "expected UnboundVariable";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnboundVariable);
  }
}

TEST(RunProgram, MissingParamBindingFails) {
  LoopProgram p = parseProgram(accumulateSource());
  try {
    runProgram(p, {{"x", vec({1, 2})}});
    FAIL() << "expected UnboundParameter";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnboundParameter);
  }
}

TEST(RunProgram, WrongShapeBindingFails) {
  LoopProgram p = parseProgram(accumulateSource());
  try {
    runProgram(p, {{"x", vec({1, 2, 3})}, {"a", vec({1, 1})}});
    FAIL() << "expected ShapeMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(RunProgram, CounterIsVisibleInBodyAndScopedToLoop) {
  LoopProgram p = parseProgram(R"(func f(s: tensor<>) {
  for i in 0..9 {
    s = add(s, i)
  }
  return s
}
)");
  // 0 + 1 + ... + 8 = 36.
  RunResult r = runProgram(p, {{"s", Tensor::scalar(0)}});
  EXPECT_EQ(r.returns[0], Tensor::scalar(36));
}

TEST(RunProgram, HeaderLogRecordsStartOfIterationValues) {
  LoopProgram p = parseProgram(accumulateSource());
  Bindings env{{"x", vec({1, 1})}, {"a", vec({2, 3})}};
  RunResult r = runProgram(p, env, /*recordHeaders=*/true);
  ASSERT_EQ(r.headerLog.count("x"), 1u);
  const auto& log = r.headerLog.at("x");
  ASSERT_EQ(log.size(), 15u);
  for (int64_t i = 0; i < 15; ++i) {
    EXPECT_EQ(log[i], vec({1 + 2.0 * i, 1 + 3.0 * i})) << "iteration " << i;
  }
}

TEST(RunProgram, HeaderLogCoversEveryCarriedVar) {
  LoopProgram p = parseProgram(rowRunningSumSource());
  Bindings env{{"x", Tensor::zeros(Shape{2, 3})},
               {"a", Tensor::ones(Shape{2, 3})},
               {"y", Tensor::zeros(Shape{3})}};
  RunResult r = runProgram(p, env, true);
  EXPECT_EQ(r.headerLog.size(), 2u);
  EXPECT_EQ(r.headerLog.at("x").size(), 15u);
  EXPECT_EQ(r.headerLog.at("y").size(), 15u);
  // z is derived, never carried across the back edge.
  EXPECT_EQ(r.headerLog.count("z"), 0u);
}

TEST(RunProgram, HeaderLogPresentButEmptyAtZeroTrips) {
  LoopProgram p = parseProgram(R"(func f(x: tensor<2>, a: tensor<2>) {
  for i in 0..0 {
    x = add(x, a)
  }
  return x
}
)");
  RunResult r = runProgram(p, {{"x", vec({1, 2})}, {"a", vec({0, 0})}}, true);
  ASSERT_EQ(r.headerLog.count("x"), 1u);
  EXPECT_TRUE(r.headerLog.at("x").empty());
}

TEST(RunProgram, DeterministicAcrossRuns) {
  LoopProgram p = parseProgram(rowRunningSumSource());
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Bindings env{{"x", randomTensor(rng, Shape{2, 3}, -5, 5, false)},
                 {"a", randomTensor(rng, Shape{2, 3}, -5, 5, false)},
                 {"y", randomTensor(rng, Shape{3}, -5, 5, false)}};
    RunResult r1 = runProgram(p, env);
    RunResult r2 = runProgram(p, env);
    ASSERT_EQ(r1.returns.size(), r2.returns.size());
    // Bit-identical, not merely close: the oracle must be reproducible.
    EXPECT_EQ(r1.returns[0], r2.returns[0]);
  }
}

TEST(RunProgram, PreAndPostStatementsRunOnce) {
  LoopProgram p = parseProgram(R"(func f(a: tensor<2>) {
  b = scale(3, a)
  for i in 0..4 {
    b = add(b, a)
  }
  c = scale(2, b)
  return c
}
)");
  RunResult r = runProgram(p, {{"a", vec({1, 10})}});
  // b = 3a, four additions of a -> 7a, then doubled -> 14a.
  EXPECT_EQ(r.returns[0], vec({14, 140}));
}

TEST(RunProgram, MultipleReturnsKeepOrder) {
  LoopProgram p = parseProgram(R"(func f(a: tensor<2>) {
  b = scale(2, a)
  c = scale(3, a)
  return c, b
}
)");
  RunResult r = runProgram(p, {{"a", vec({1, 1})}});
  ASSERT_EQ(r.returns.size(), 2u);
  EXPECT_EQ(r.returns[0], vec({3, 3}));
  EXPECT_EQ(r.returns[1], vec({2, 2}));
}
