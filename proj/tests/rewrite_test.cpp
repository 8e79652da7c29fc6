#include "tev/rewrite.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "support/progen.hpp"
#include "support/testutil.hpp"
#include "tev/print.hpp"

using namespace tev;
using tev::testing::randomTensor;
using tev::testing::vec;

namespace {

const Shape kVec{3};
const ShapeEnv kEnv{{"x", kVec}, {"a", kVec}, {"b", kVec}, {"c", kVec},
                    {"k", kVec}, {"y", kVec}};

TevPtr var(const char* name) { return tevInvariant(eVar(name), kEnv); }

TevPtr chainOf(std::vector<const char*> names, ChainOp op) {
  std::vector<TevPtr> operands;
  for (const char* n : names) operands.push_back(var(n));
  return tevChain(std::move(operands), std::vector<ChainOp>(names.size() - 1, op));
}

Bindings randomKEnv(std::mt19937_64& rng, double lo, double hi, bool integerValued) {
  Bindings env;
  for (const auto& [name, shape] : kEnv) {
    env.emplace(name, randomTensor(rng, shape, lo, hi, integerValued));
  }
  return env;
}

// Soundness harness: the rewritten expression denotes the same sequence as
// the reference. Exact equality for integer data; tolerance otherwise.
void expectSameSequence(const TevPtr& before, const TevPtr& after, int trials, double lo,
                        double hi, bool integerValued, uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    Bindings env = randomKEnv(rng, lo, hi, integerValued);
    for (int64_t i = 0; i <= 8; ++i) {
      Tensor want = evalStep(before, i, env);
      Tensor got = evalStep(after, i, env);
      if (integerValued) {
        ASSERT_EQ(got, want) << renderTev(before) << " => " << renderTev(after) << " at i="
                             << i << ": " << tev::testing::describeMismatch(got, want);
      } else {
        ASSERT_TRUE(allClose(got, want, 1e-12, 1e-12))
            << renderTev(before) << " => " << renderTev(after) << " at i=" << i << ": "
            << tev::testing::describeMismatch(got, want);
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// addInvariant
// ---------------------------------------------------------------------------

TEST(AddInvariant, FoldsIntoHeadOperand) {
  TevPtr chain = chainOf({"x", "a"}, ChainOp::Add);
  TevPtr got = addInvariant(eVar("k"), chain, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 1);
  // Only the head changes; the step operand is untouched.
  EXPECT_TRUE(tevEqual(got->operands[1], chain->operands[1]));
  expectSameSequence(wrapBinary(WrapKind::Add, var("k"), chain), got, 100, -4, 4, true, 101);
}

TEST(AddInvariant, HeadOperatorMustBeAdditive) {
  try {
    addInvariant(eVar("k"), chainOf({"x", "a"}, ChainOp::Mul), kEnv);
    FAIL() << "expected WrongChainOperator";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WrongChainOperator);
  }
  try {
    addInvariant(eVar("k"), var("x"), kEnv);
    FAIL() << "expected WrongChainOperator";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WrongChainOperator);
  }
}

TEST(AddInvariant, DeeperLevelsMayBeMultiplicative) {
  // Only the head op must be '+': {x, +, a, *, b} still accepts k.
  TevPtr mixedTail = tevChain({var("x"), var("a"), var("b")}, {ChainOp::Add, ChainOp::Mul});
  TevPtr got = addInvariant(eVar("k"), mixedTail, kEnv);
  expectSameSequence(wrapBinary(WrapKind::Add, var("k"), mixedTail), got, 100, 1, 3, true,
                     102);
}

TEST(AddInvariant, ShapeMismatchIsRejected) {
  try {
    addInvariant(eLit(Tensor::scalar(2)), chainOf({"x", "a"}, ChainOp::Add), kEnv);
    FAIL() << "expected ShapeMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

// ---------------------------------------------------------------------------
// mulInvariant / scaleChain
// ---------------------------------------------------------------------------

TEST(MulInvariant, DistributesOverEveryOperand) {
  TevPtr chain = chainOf({"x", "a", "b"}, ChainOp::Add);
  TevPtr got = mulInvariant(eVar("k"), chain, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 2);
  expectSameSequence(wrapBinary(WrapKind::Mul, var("k"), chain), got, 100, -4, 4, true, 103);
}

TEST(MulInvariant, RequiresAllAdditiveChain) {
  for (auto op : {ChainOp::Mul}) {
    try {
      mulInvariant(eVar("k"), chainOf({"x", "a"}, op), kEnv);
      FAIL() << "expected NonAdditiveChain";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::NonAdditiveChain);
    }
  }
  TevPtr mixed = tevChain({var("x"), var("a"), var("b")}, {ChainOp::Add, ChainOp::Mul});
  try {
    mulInvariant(eVar("k"), mixed, kEnv);
    FAIL() << "expected NonAdditiveChain";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonAdditiveChain);
  }
}

TEST(ScaleChain, ScalarSpecialCase) {
  TevPtr chain = chainOf({"x", "a"}, ChainOp::Add);
  TevPtr got = scaleChain(-2.5, chain, kEnv);
  expectSameSequence(wrapScale(-2.5, chain), got, 100, -4, 4, true, 104);
  // -2.5 * integer grids stay exactly representable, so exact compare is fair.
}

// ---------------------------------------------------------------------------
// tevAdd
// ---------------------------------------------------------------------------

TEST(TevAdd, OperandWiseOnEqualDepth) {
  TevPtr a = chainOf({"x", "a"}, ChainOp::Add);
  TevPtr b = chainOf({"y", "b"}, ChainOp::Add);
  TevPtr got = tevAdd(a, b, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 1);
  expectSameSequence(wrapBinary(WrapKind::Add, a, b), got, 100, -4, 4, true, 105);
}

TEST(TevAdd, ZeroPadsTheShorterChain) {
  TevPtr shallow = chainOf({"x", "a"}, ChainOp::Add);
  TevPtr deep = chainOf({"y", "b", "c"}, ChainOp::Add);
  TevPtr got = tevAdd(shallow, deep, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 2);
  expectSameSequence(wrapBinary(WrapKind::Add, shallow, deep), got, 100, -4, 4, true, 106);
}

TEST(TevAdd, InvariantPlusChainDelegates) {
  TevPtr chain = chainOf({"x", "a"}, ChainOp::Add);
  TevPtr got = tevAdd(var("k"), chain, kEnv);
  EXPECT_TRUE(tevEqual(got, addInvariant(eVar("k"), chain, kEnv)));
  // Symmetric case.
  EXPECT_TRUE(tevEqual(tevAdd(chain, var("k"), kEnv), got));
}

TEST(TevAdd, UnknownAbsorbs) {
  TevPtr u = tevUnknown("v", "unanalyzable", kVec);
  EXPECT_TRUE(isUnknown(tevAdd(u, chainOf({"x", "a"}, ChainOp::Add), kEnv)));
  EXPECT_TRUE(isUnknown(tevAdd(chainOf({"x", "a"}, ChainOp::Add), u, kEnv)));
}

TEST(TevAdd, MultiplicativeChainIsRejected) {
  try {
    tevAdd(chainOf({"x", "a"}, ChainOp::Mul), chainOf({"y", "b"}, ChainOp::Add), kEnv);
    FAIL() << "expected NonAdditiveChain";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonAdditiveChain);
  }
}

TEST(TevAdd, ShapeMismatchIsRejected) {
  TevPtr s = tevInvariant(eScalar(1));
  try {
    tevAdd(s, chainOf({"x", "a"}, ChainOp::Add), kEnv);
    FAIL() << "expected ShapeMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

// ---------------------------------------------------------------------------
// tevMul
// ---------------------------------------------------------------------------

TEST(TevMul, ProductOfTwoLinearChains) {
  // {A, +, B} * {C, +, D} must satisfy (x0 + i*B)(y0 + i*D) pointwise; the
  // result is a depth-2 additive chain (a quadratic sequence).
  TevPtr f = chainOf({"a", "b"}, ChainOp::Add);
  TevPtr g = chainOf({"c", "k"}, ChainOp::Add);
  TevPtr got = tevMul(f, g, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 2);
  EXPECT_TRUE(isUniformChain(got, ChainOp::Add));
  expectSameSequence(wrapBinary(WrapKind::Mul, f, g), got, 100, -4, 4, true, 107);
  // Head operand is the product of the heads.
  Bindings env{{"a", vec({2, 3, 4})}, {"b", vec({0, 0, 0})}, {"c", vec({5, 6, 7})},
               {"k", vec({0, 0, 0})}, {"x", vec({0, 0, 0})}, {"y", vec({0, 0, 0})}};
  EXPECT_EQ(evalStep(got, 0, env), vec({10, 18, 28}));
}

TEST(TevMul, DepthIsAdditive) {
  TevPtr quad = tevMul(chainOf({"a", "b"}, ChainOp::Add),
                       chainOf({"c", "k"}, ChainOp::Add), kEnv);
  TevPtr cubic = tevMul(quad, chainOf({"x", "y"}, ChainOp::Add), kEnv);
  EXPECT_EQ(chainDepth(cubic), 3);
  expectSameSequence(
      wrapBinary(WrapKind::Mul, quad, chainOf({"x", "y"}, ChainOp::Add)), cubic, 60, -3, 3,
      true, 108);
}

TEST(TevMul, DepthBeyondCapDegradesToUnknown) {
  // Two depth-5 chains multiply to depth 10 > 8.
  TevPtr five = tevChain({var("x"), var("a"), var("b"), var("c"), var("k"), var("y")},
                         std::vector<ChainOp>(5, ChainOp::Add));
  TevPtr got = tevMul(five, five, kEnv);
  ASSERT_TRUE(isUnknown(got));
  EXPECT_NE(got->reason.find("depth"), std::string::npos);
}

TEST(TevMul, InvariantTimesChainDistributes) {
  TevPtr chain = chainOf({"x", "a"}, ChainOp::Add);
  EXPECT_TRUE(tevEqual(tevMul(var("k"), chain, kEnv), mulInvariant(eVar("k"), chain, kEnv)));
}

TEST(TevMul, MultiplicativeChainsAreRejected) {
  try {
    tevMul(chainOf({"x", "a"}, ChainOp::Mul), chainOf({"y", "b"}, ChainOp::Add), kEnv);
    FAIL() << "expected NonAdditiveChain";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonAdditiveChain);
  }
}

// ---------------------------------------------------------------------------
// structural pushes
// ---------------------------------------------------------------------------

TEST(PushSlice, DistributesOverAdditiveChain) {
  ShapeEnv env{{"x", Shape{2, 3}}, {"a", Shape{2, 3}}};
  TevPtr chain = tevChain({tevInvariant(eVar("x"), env), tevInvariant(eVar("a"), env)},
                          {ChainOp::Add});
  SliceSpec spec{{{1, 2}, {0, 3}}};
  TevPtr got = pushSlice(chain, spec, env);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(got->shape, (Shape{1, 3}));
  std::mt19937_64 rng(109);
  for (int trial = 0; trial < 100; ++trial) {
    Bindings b{{"x", randomTensor(rng, Shape{2, 3}, -4, 4, true)},
               {"a", randomTensor(rng, Shape{2, 3}, -4, 4, true)}};
    for (int64_t i = 0; i <= 8; ++i) {
      EXPECT_EQ(evalStep(got, i, b), evalStep(wrapSlice(chain, spec), i, b));
    }
  }
}

TEST(PushSlice, WorksOnMultiplicativeChains) {
  ShapeEnv env{{"x", Shape{2, 3}}, {"a", Shape{2, 3}}};
  TevPtr chain = tevChain({tevInvariant(eVar("x"), env), tevInvariant(eVar("a"), env)},
                          {ChainOp::Mul});
  SliceSpec spec{{{0, 1}, {1, 3}}};
  TevPtr got = pushSlice(chain, spec, env);
  EXPECT_TRUE(isUniformChain(got, ChainOp::Mul));
  std::mt19937_64 rng(110);
  Bindings b{{"x", randomTensor(rng, Shape{2, 3}, 0.5, 2, false)},
             {"a", randomTensor(rng, Shape{2, 3}, 0.5, 2, false)}};
  for (int64_t i = 0; i <= 8; ++i) {
    Tensor want = evalStep(wrapSlice(chain, spec), i, b);
    Tensor gotV = evalStep(got, i, b);
    EXPECT_TRUE(allClose(gotV, want, 1e-12, 1e-12));
  }
}

TEST(PushSlice, MixedChainIsRejected) {
  TevPtr mixed = tevChain({var("x"), var("a"), var("b")}, {ChainOp::Add, ChainOp::Mul});
  try {
    pushSlice(mixed, SliceSpec{{{0, 2}}}, kEnv);
    FAIL() << "expected NonUniformChain";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonUniformChain);
  }
}

TEST(PushReshape, TransposeDistributes) {
  ShapeEnv env{{"x", Shape{2, 3}}, {"a", Shape{2, 3}}};
  TevPtr chain = tevChain({tevInvariant(eVar("x"), env), tevInvariant(eVar("a"), env)},
                          {ChainOp::Add});
  std::vector<int> perm{1, 0};
  TevPtr got = pushReshape(chain, std::nullopt, perm, env);
  EXPECT_EQ(got->shape, (Shape{3, 2}));
  std::mt19937_64 rng(111);
  for (int trial = 0; trial < 100; ++trial) {
    Bindings b{{"x", randomTensor(rng, Shape{2, 3}, -4, 4, true)},
               {"a", randomTensor(rng, Shape{2, 3}, -4, 4, true)}};
    for (int64_t i = 0; i <= 8; ++i) {
      EXPECT_EQ(evalStep(got, i, b),
                evalStep(wrapReshape(chain, std::nullopt, perm), i, b));
    }
  }
}

TEST(PushBroadcast, Distributes) {
  ShapeEnv env{{"v", Shape{3}}, {"w", Shape{3}}};
  TevPtr chain = tevChain({tevInvariant(eVar("v"), env), tevInvariant(eVar("w"), env)},
                          {ChainOp::Add});
  TevPtr got = pushBroadcast(chain, Shape{2, 3}, env);
  EXPECT_EQ(got->shape, (Shape{2, 3}));
  std::mt19937_64 rng(112);
  for (int trial = 0; trial < 100; ++trial) {
    Bindings b{{"v", randomTensor(rng, Shape{3}, -4, 4, true)},
               {"w", randomTensor(rng, Shape{3}, -4, 4, true)}};
    for (int64_t i = 0; i <= 8; ++i) {
      EXPECT_EQ(evalStep(got, i, b), evalStep(wrapBroadcast(chain, Shape{2, 3}), i, b));
    }
  }
}

// ---------------------------------------------------------------------------
// concatChains
// ---------------------------------------------------------------------------

TEST(ConcatChains, OperandWiseWithZeroPadding) {
  ShapeEnv env{{"p", Shape{1, 3}}, {"q", Shape{1, 3}}, {"r", Shape{1, 3}}, {"s", Shape{1, 3}},
               {"t", Shape{1, 3}}};
  TevPtr shallow = tevChain({tevInvariant(eVar("p"), env), tevInvariant(eVar("q"), env)},
                            {ChainOp::Add});
  TevPtr deep = tevChain({tevInvariant(eVar("r"), env), tevInvariant(eVar("s"), env),
                          tevInvariant(eVar("t"), env)},
                         {ChainOp::Add, ChainOp::Add});
  TevPtr got = concatChains(shallow, deep, 0, env);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 2);
  EXPECT_EQ(got->shape, (Shape{2, 3}));
  std::mt19937_64 rng(113);
  for (int trial = 0; trial < 100; ++trial) {
    Bindings b;
    for (const char* n : {"p", "q", "r", "s", "t"}) {
      b.emplace(n, randomTensor(rng, Shape{1, 3}, -4, 4, true));
    }
    for (int64_t i = 0; i <= 8; ++i) {
      EXPECT_EQ(evalStep(got, i, b), evalStep(wrapConcat(shallow, deep, 0), i, b));
    }
  }
}

TEST(ConcatChains, InvariantWithChainPadsInvariantSide) {
  ShapeEnv env{{"p", Shape{1, 3}}, {"r", Shape{1, 3}}, {"s", Shape{1, 3}}};
  TevPtr chain = tevChain({tevInvariant(eVar("r"), env), tevInvariant(eVar("s"), env)},
                          {ChainOp::Add});
  TevPtr got = concatChains(tevInvariant(eVar("p"), env), chain, 0, env);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 1);
  std::mt19937_64 rng(114);
  Bindings b;
  for (const char* n : {"p", "r", "s"}) b.emplace(n, randomTensor(rng, Shape{1, 3}, -4, 4, true));
  for (int64_t i = 0; i <= 8; ++i) {
    EXPECT_EQ(evalStep(got, i, b),
              evalStep(wrapConcat(tevInvariant(eVar("p"), env), chain, 0), i, b));
  }
}

TEST(ConcatChains, MultiplicativeLevelsPadWithOnes) {
  ShapeEnv env{{"p", Shape{1, 3}}, {"r", Shape{1, 3}}, {"s", Shape{1, 3}}};
  TevPtr chain = tevChain({tevInvariant(eVar("r"), env), tevInvariant(eVar("s"), env)},
                          {ChainOp::Mul});
  TevPtr got = concatChains(tevInvariant(eVar("p"), env), chain, 0, env);
  ASSERT_TRUE(isChain(got));
  EXPECT_TRUE(isUniformChain(got, ChainOp::Mul));
  std::mt19937_64 rng(115);
  Bindings b;
  for (const char* n : {"p", "r", "s"}) b.emplace(n, randomTensor(rng, Shape{1, 3}, 0.5, 2, false));
  for (int64_t i = 0; i <= 8; ++i) {
    Tensor want = evalStep(wrapConcat(tevInvariant(eVar("p"), env), chain, 0), i, b);
    Tensor gotV = evalStep(got, i, b);
    EXPECT_TRUE(allClose(gotV, want, 1e-12, 1e-12));
  }
}

TEST(ConcatChains, DifferentOperatorListsAreRejected) {
  ShapeEnv env{{"p", Shape{1, 3}}, {"q", Shape{1, 3}}, {"r", Shape{1, 3}}, {"s", Shape{1, 3}}};
  TevPtr plus = tevChain({tevInvariant(eVar("p"), env), tevInvariant(eVar("q"), env)},
                         {ChainOp::Add});
  TevPtr times = tevChain({tevInvariant(eVar("r"), env), tevInvariant(eVar("s"), env)},
                          {ChainOp::Mul});
  try {
    concatChains(plus, times, 0, env);
    FAIL() << "expected OperatorMismatch";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OperatorMismatch);
  }
}

// ---------------------------------------------------------------------------
// logChain / expChain / powConstBase
// ---------------------------------------------------------------------------

TEST(LogChain, TurnsProductsIntoSums) {
  TevPtr geo = chainOf({"x", "a"}, ChainOp::Mul);
  TevPtr got = logChain(geo, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_TRUE(isUniformChain(got, ChainOp::Add));
  expectSameSequence(wrapUnary(WrapKind::Log, geo), got, 100, 0.5, 2.0, false, 116);
}

TEST(LogChain, AdditiveChainIsRejected) {
  try {
    logChain(chainOf({"x", "a"}, ChainOp::Add), kEnv);
    FAIL() << "expected WrongChainOperator";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WrongChainOperator);
  }
}

TEST(ExpChain, TurnsSumsIntoProducts) {
  TevPtr arith = chainOf({"x", "a"}, ChainOp::Add);
  TevPtr got = expChain(arith, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_TRUE(isUniformChain(got, ChainOp::Mul));
  expectSameSequence(wrapUnary(WrapKind::Exp, arith), got, 100, -1.0, 1.0, false, 117);
}

TEST(ExpChain, RoundTripsWithLogChain) {
  TevPtr arith = chainOf({"x", "a", "b"}, ChainOp::Add);
  TevPtr back = logChain(expChain(arith, kEnv), kEnv);
  expectSameSequence(arith, back, 50, -1.0, 1.0, false, 118);
}

TEST(PowConstBase, ExponentChainBecomesProductChain) {
  TevPtr exponent = chainOf({"x", "a"}, ChainOp::Add);
  TevPtr got = powConstBase(eVar("k"), exponent, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_TRUE(isUniformChain(got, ChainOp::Mul));
  expectSameSequence(wrapPow(var("k"), exponent), got, 100, 0.5, 1.5, false, 119);
}

TEST(PowConstBase, MultiplicativeExponentIsRejected) {
  try {
    powConstBase(eVar("k"), chainOf({"x", "a"}, ChainOp::Mul), kEnv);
    FAIL() << "expected NonAdditiveChain";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonAdditiveChain);
  }
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

TEST(Inject, InvariantStepMakesDepthOneChain) {
  TevPtr got = inject(var("a"), eVar("x"), ChainOp::Add, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 1);
  // Semantics: i applications of v <- v + a from x is x + i*a.
  std::mt19937_64 rng(120);
  for (int trial = 0; trial < 100; ++trial) {
    Bindings env = randomKEnv(rng, -4, 4, true);
    for (int64_t i = 0; i <= 8; ++i) {
      Tensor want = env.at("x");
      for (int64_t j = 0; j < i; ++j) {
        want = elementwiseBinary(BinaryOp::Add, want, env.at("a"));
      }
      EXPECT_EQ(evalStep(got, i, env), want);
    }
  }
}

TEST(Inject, ChainStepSplicesFlat) {
  // Step {a, +, b} injected under '+' gives {x, +, a, +, b}: the running sum
  // of a linear sequence is quadratic.
  TevPtr step = chainOf({"a", "b"}, ChainOp::Add);
  TevPtr got = inject(step, eVar("x"), ChainOp::Add, kEnv);
  ASSERT_TRUE(isChain(got));
  EXPECT_EQ(chainDepth(got), 2);
  EXPECT_FALSE(isChain(got->operands.back()));
  std::mt19937_64 rng(121);
  for (int trial = 0; trial < 100; ++trial) {
    Bindings env = randomKEnv(rng, -4, 4, true);
    for (int64_t i = 0; i <= 8; ++i) {
      Tensor want = env.at("x");
      for (int64_t j = 0; j < i; ++j) {
        want = elementwiseBinary(BinaryOp::Add, want, evalStep(step, j, env));
      }
      EXPECT_EQ(evalStep(got, i, env), want);
    }
  }
}

TEST(Inject, MultiplicativeInjection) {
  TevPtr got = inject(var("a"), eVar("x"), ChainOp::Mul, kEnv);
  ASSERT_TRUE(isUniformChain(got, ChainOp::Mul));
  std::mt19937_64 rng(122);
  Bindings env = randomKEnv(rng, 0.5, 2.0, false);
  for (int64_t i = 0; i <= 8; ++i) {
    Tensor want = env.at("x");
    for (int64_t j = 0; j < i; ++j) want = elementwiseBinary(BinaryOp::Mul, want, env.at("a"));
    Tensor gotV = evalStep(got, i, env);
    EXPECT_TRUE(allClose(gotV, want, 1e-12, 1e-12));
  }
}

TEST(Inject, UnknownStepStaysUnknown) {
  TevPtr got = inject(tevUnknown("v", "mixed updates", kVec), eVar("x"), ChainOp::Add, kEnv);
  ASSERT_TRUE(isUnknown(got));
  EXPECT_NE(got->reason.find("mixed updates"), std::string::npos);
}

TEST(Inject, DepthBeyondCapDegradesToUnknown) {
  TevPtr deep = tevChain({var("x"), var("a"), var("b"), var("c"), var("k"), var("y"),
                          var("x"), var("a"), var("b")},
                         std::vector<ChainOp>(8, ChainOp::Add));
  EXPECT_EQ(chainDepth(deep), 8);
  TevPtr got = inject(deep, eVar("x"), ChainOp::Add, kEnv);
  ASSERT_TRUE(isUnknown(got));
  EXPECT_NE(got->reason.find("depth"), std::string::npos);
}

// ---------------------------------------------------------------------------
// normalize
// ---------------------------------------------------------------------------

TEST(Normalize, ResolvesAddOfInvariantAndChain) {
  TevPtr raw = wrapBinary(WrapKind::Add, var("k"), chainOf({"x", "a"}, ChainOp::Add));
  auto [result, trace] = normalize(raw, kEnv);
  ASSERT_TRUE(isChain(result));
  ASSERT_FALSE(trace.steps.empty());
  EXPECT_EQ(trace.steps[0].rule, "add-invariant");
  expectSameSequence(raw, result, 60, -4, 4, true, 123);
}

TEST(Normalize, TraceReplaysAsEqualityChain) {
  // A nested expression that needs several rules: scale over an add of two
  // chains under a slice.
  ShapeEnv env{{"x", Shape{2, 3}}, {"a", Shape{2, 3}}, {"y", Shape{2, 3}}, {"b", Shape{2, 3}}};
  TevPtr c1 = tevChain({tevInvariant(eVar("x"), env), tevInvariant(eVar("a"), env)},
                       {ChainOp::Add});
  TevPtr c2 = tevChain({tevInvariant(eVar("y"), env), tevInvariant(eVar("b"), env)},
                       {ChainOp::Add});
  TevPtr raw = wrapSlice(wrapScale(3.0, wrapBinary(WrapKind::Add, c1, c2)),
                         SliceSpec{{{1, 2}, {0, 3}}});
  auto [result, trace] = normalize(raw, env);
  ASSERT_TRUE(isChain(result));
  ASSERT_GE(trace.steps.size(), 3u);
  EXPECT_EQ(trace.steps.front().before, renderTev(raw));
  EXPECT_EQ(trace.steps.back().after, renderTev(result));
  for (size_t k = 0; k + 1 < trace.steps.size(); ++k) {
    EXPECT_EQ(trace.steps[k].after, trace.steps[k + 1].before)
        << "trace discontinuity after step " << k << " (" << trace.steps[k].rule << ")";
  }
}

TEST(Normalize, SubBecomesAddOfNeg) {
  TevPtr raw = wrapBinary(WrapKind::Sub, chainOf({"x", "a"}, ChainOp::Add),
                          chainOf({"y", "b"}, ChainOp::Add));
  auto [result, trace] = normalize(raw, kEnv);
  ASSERT_TRUE(isChain(result));
  bool sawSubRule = false;
  for (const auto& s : trace.steps) sawSubRule = sawSubRule || s.rule == "sub-as-add-of-neg";
  EXPECT_TRUE(sawSubRule);
  expectSameSequence(raw, result, 60, -4, 4, true, 124);
}

TEST(Normalize, FoldsInvariantWraps) {
  TevPtr raw = wrapBinary(WrapKind::Add, var("x"), wrapScale(2.0, var("a")));
  auto [result, trace] = normalize(raw, kEnv);
  ASSERT_TRUE(isInvariant(result));
  EXPECT_FALSE(trace.steps.empty());
  EXPECT_EQ(trace.steps[0].rule, "fold-invariant");
}

TEST(Normalize, UnknownPropagatesUpward) {
  TevPtr raw = wrapBinary(WrapKind::Add, var("x"),
                          wrapScale(2.0, tevUnknown("v", "unanalyzable", kVec)));
  auto [result, trace] = normalize(raw, kEnv);
  ASSERT_TRUE(isUnknown(result));
  for (const auto& s : trace.steps) EXPECT_EQ(s.rule, "unknown-propagate");
}

TEST(Normalize, UnrewritableWrapPersists) {
  // log of an additive chain has no chain form; the wrap must survive and
  // still evaluate correctly.
  TevPtr raw = wrapUnary(WrapKind::Log, chainOf({"x", "a"}, ChainOp::Add));
  auto [result, trace] = normalize(raw, kEnv);
  EXPECT_TRUE(isWrap(result));
  EXPECT_TRUE(trace.steps.empty());
  EXPECT_TRUE(isFullyRewritten(result, kEnv));
  expectSameSequence(raw, result, 30, 0.5, 2.0, false, 125);
}

TEST(Normalize, IsIdempotent) {
  ShapeEnv env{{"x", Shape{2, 3}}, {"a", Shape{2, 3}}, {"y", Shape{2, 3}}, {"b", Shape{2, 3}}};
  TevPtr c1 = tevChain({tevInvariant(eVar("x"), env), tevInvariant(eVar("a"), env)},
                       {ChainOp::Add});
  TevPtr c2 = tevChain({tevInvariant(eVar("y"), env), tevInvariant(eVar("b"), env)},
                       {ChainOp::Add});
  TevPtr raw = wrapScale(2.0, wrapBinary(WrapKind::Mul, c1, c2));
  auto [result, trace] = normalize(raw, env);
  EXPECT_FALSE(trace.steps.empty());
  auto [again, trace2] = normalize(result, env);
  EXPECT_TRUE(trace2.steps.empty());
  EXPECT_TRUE(tevEqual(again, result));
  EXPECT_TRUE(isFullyRewritten(result, env));
  EXPECT_TRUE(chainInvariantsHold(result));
}

TEST(Normalize, PowConstBaseFires) {
  TevPtr raw = wrapPow(var("k"), chainOf({"x", "a"}, ChainOp::Add));
  auto [result, trace] = normalize(raw, kEnv);
  ASSERT_TRUE(isChain(result));
  EXPECT_TRUE(isUniformChain(result, ChainOp::Mul));
  bool sawRule = false;
  for (const auto& s : trace.steps) sawRule = sawRule || s.rule == "pow-const-base";
  EXPECT_TRUE(sawRule);
  expectSameSequence(raw, result, 50, 0.5, 1.5, false, 126);
}

TEST(ChainInvariants, DetectViolations) {
  EXPECT_TRUE(chainInvariantsHold(var("x")));
  EXPECT_TRUE(chainInvariantsHold(chainOf({"x", "a"}, ChainOp::Add)));
  // A chain nested in a non-final slot violates the flattenedness invariant.
  TevPtr inner = chainOf({"a", "b"}, ChainOp::Add);
  TevPtr bad = tevChain({inner, var("x")}, {ChainOp::Add});
  EXPECT_FALSE(chainInvariantsHold(bad));
}

// ---------------------------------------------------------------------------
// Randomized whole-pipeline soundness
// ---------------------------------------------------------------------------

TEST(Property, NormalizePreservesMeaning) {
  std::mt19937_64 rng(4242);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    tev::testing::RandomTev rt = tev::testing::randomTevExpr(rng, /*allowUnknown=*/false);
    auto [result, trace] = normalize(rt.tev, rt.shapes);
    EXPECT_TRUE(chainInvariantsHold(result));
    Bindings env;
    for (const auto& [name, shape] : rt.shapes) {
      env.emplace(name, randomTensor(rng, shape, 0.5, 2.0, false));
    }
    bool defined = true;
    for (int64_t i = 0; defined && i <= 6; ++i) {
      try {
        Tensor want = evalStep(rt.tev, i, env);
        Tensor got = evalStep(result, i, env);
        ASSERT_TRUE(allClose(got, want, 1e-9, 1e-9))
            << renderTev(rt.tev) << " => " << renderTev(result) << " at i=" << i << ": "
            << tev::testing::describeMismatch(got, want);
        ++checked;
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::CannotEvaluateUnknown) {
          // tevMul depth degradation; acceptable, nothing to compare.
          defined = false;
        } else {
          defined = false;  // domain fault in the reference (log of negative)
        }
      }
    }
  }
  EXPECT_GE(checked, 800);
}
