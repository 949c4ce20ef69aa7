#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "interformer/autograd.hpp"
#include "interformer/errors.hpp"
#include "oracles.hpp"

using namespace interformer;

namespace {

std::mt19937_64 rng_for(int seed) { return std::mt19937_64(1000 + seed); }

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor t{{1, 2, 3}, {4, 5, 6}};
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t(1, 2), 6);
  EXPECT_EQ(t.transposed()(2, 1), 6);
  EXPECT_EQ(t.reshaped(3, 2)(2, 0), 5);
  EXPECT_THROW(t.reshaped(4, 2), DimensionError);
  EXPECT_EQ(Tensor::identity(3)(1, 1), 1.0);
  EXPECT_EQ(t.shape_string(), "2x3");
}

TEST(Tensor, RaggedInitializerThrows) {
  EXPECT_THROW((Tensor{{1, 2}, {3}}), DimensionError);
}

TEST(Tensor, GemmKernelsMatchTripleLoop) {
  auto rng = rng_for(0);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t m = rng() % 13 + 1, k = rng() % 11 + 1, n = rng() % 17 + 1;
    const Tensor a = oracle::random_tensor(rng, m, k), b = oracle::random_tensor(rng, k, n);
    const Tensor want = oracle::matmul(a, b);
    Tensor out(m, n);
    gemm_accumulate(a.values().data(), b.values().data(), out.values().data(), m, k, n);
    EXPECT_LE(max_abs_diff(out, want), 1e-12);

    const Tensor bt = b.transposed();
    Tensor out_nt(m, n);
    gemm_nt_accumulate(a.values().data(), bt.values().data(), out_nt.values().data(), m, k, n);
    EXPECT_LE(max_abs_diff(out_nt, want), 1e-12);

    const Tensor at = a.transposed();
    Tensor out_tn(m, n);
    gemm_tn_accumulate(at.values().data(), b.values().data(), out_tn.values().data(), m, k, n);
    EXPECT_LE(max_abs_diff(out_tn, want), 1e-12);
  }
}

TEST(Tensor, GemmRowResultIndependentOfBatch) {
  auto rng = rng_for(1);
  const Tensor a = oracle::random_tensor(rng, 37, 19), b = oracle::random_tensor(rng, 19, 23);
  Tensor full(37, 23);
  gemm_accumulate(a.values().data(), b.values().data(), full.values().data(), 37, 19, 23);
  for (std::size_t r = 0; r < 37; r += 5) {
    Tensor one(1, 23);
    gemm_accumulate(a.row(r).data(), b.values().data(), one.values().data(), 1, 19, 23);
    for (std::size_t j = 0; j < 23; ++j) EXPECT_EQ(one(0, j), full(r, j));
  }
}

TEST(Ops, MatmulMatchesOracleAndRejectsMismatch) {
  auto rng = rng_for(2);
  Graph g;
  const Tensor a = oracle::random_tensor(rng, 4, 3), b = oracle::random_tensor(rng, 3, 5);
  EXPECT_LE(max_abs_diff(matmul(g.constant(a), g.constant(b)).value(), oracle::matmul(a, b)),
            1e-12);
  EXPECT_THROW(matmul(g.constant(a), g.constant(a)), DimensionError);
}

TEST(Ops, NoImplicitBroadcast) {
  Graph g;
  Var a = g.constant(Tensor(2, 3, 1.0)), row = g.constant(Tensor(1, 3, 1.0));
  EXPECT_THROW(add(a, row), DimensionError);
  EXPECT_EQ(add_row_broadcast(a, row).value()(1, 2), 2.0);
  EXPECT_THROW(add_row_broadcast(a, g.constant(Tensor(1, 2))), DimensionError);
}

TEST(Ops, NonFiniteValuesAreRejectedEagerly) {
  Graph g;
  EXPECT_THROW(g.constant(Tensor(1, 1, NAN)), NumericError);
  EXPECT_THROW(g.leaf(Tensor(1, 1, INFINITY)), NumericError);
  EXPECT_THROW(log(g.constant(Tensor(1, 1, 0.0))), NumericError);
  EXPECT_THROW(scale(g.constant(Tensor(1, 1, 1e300)), 1e300), NumericError);
}

TEST(Ops, SoftmaxRowsSumToOneForLargeInputs) {
  auto rng = rng_for(3);
  for (int rep = 0; rep < 50; ++rep) {
    Graph g;
    Var p = softmax_rows(g.constant(oracle::random_tensor(rng, 3, 7, -1e3, 1e3)));
    for (std::size_t r = 0; r < 3; ++r) {
      const auto row = p.value().row(r);
      EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
    }
  }
}

TEST(Ops, MaskedSoftmaxZeroesMaskedEntries) {
  Graph g;
  Var p = masked_softmax_rows(g.constant(Tensor{{1, 2, 3}, {0, 0, 5}}), {1, 0, 1, 0, 1, 0});
  EXPECT_EQ(p.value()(0, 1), 0.0);
  EXPECT_EQ(p.value()(1, 0), 0.0);
  EXPECT_EQ(p.value()(1, 1), 1.0);
  EXPECT_NEAR(p.value()(0, 0) + p.value()(0, 2), 1.0, 1e-15);
  EXPECT_THROW(masked_softmax_rows(g.constant(Tensor(1, 2)), {0, 0}), DegenerateAttentionError);
}

TEST(Ops, LayerNormMatchesDirectFormula) {
  auto rng = rng_for(4);
  const Tensor x = oracle::random_tensor(rng, 3, 6), gamma = oracle::random_tensor(rng, 1, 6),
               beta = oracle::random_tensor(rng, 1, 6);
  Graph g;
  const Tensor y =
      layer_norm(g.constant(x), g.constant(gamma), g.constant(beta), 1e-5).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 6; ++c) mu += x(r, c) / 6;
    for (std::size_t c = 0; c < 6; ++c) var += (x(r, c) - mu) * (x(r, c) - mu) / 6;
    for (std::size_t c = 0; c < 6; ++c)
      EXPECT_NEAR(y(r, c), gamma(0, c) * (x(r, c) - mu) / std::sqrt(var + 1e-5) + beta(0, c),
                  1e-12);
  }
}

TEST(Ops, ActivationsMatchScalarDefinitions) {
  const double xs[] = {-3.0, -0.5, 0.0, 0.7, 2.5};
  for (double x : xs) {
    EXPECT_DOUBLE_EQ(activate(x, Activation::kSigmoid), 1 / (1 + std::exp(-x)));
    EXPECT_DOUBLE_EQ(activate(x, Activation::kTanh), std::tanh(x));
    EXPECT_DOUBLE_EQ(activate(x, Activation::kRelu), x > 0 ? x : 0);
    EXPECT_NEAR(activate(x, Activation::kSwish), x / (1 + std::exp(-x)), 1e-15);
    EXPECT_EQ(activate(x, Activation::kIdentity), x);
  }
  EXPECT_EQ(parse_activation("swish"), Activation::kSwish);
  EXPECT_THROW(parse_activation("gelu"), ConfigError);
}

TEST(Ops, BlockOpsFollowTokenLayout) {
  auto rng = rng_for(5);
  const std::size_t batch = 3;
  const Tensor a = oracle::random_tensor(rng, batch * 2, 4), b = oracle::random_tensor(rng, batch * 3, 4);
  Graph g;
  Block parts[] = {{g.constant(a), 2}, {g.constant(b), 3}};
  const Tensor cat = concat_blocks(parts, batch).value();
  ASSERT_EQ(cat.rows(), batch * 5);
  for (std::size_t e = 0; e < batch; ++e) {
    for (std::size_t c = 0; c < 4; ++c) {
      EXPECT_EQ(cat(e * 5 + 1, c), a(e * 2 + 1, c));
      EXPECT_EQ(cat(e * 5 + 4, c), b(e * 3 + 2, c));
    }
  }

  const Tensor gathered = gather_rows(g.constant(a), {2, -1, 0}).value();
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(gathered(0, c), a(2, c));
    EXPECT_EQ(gathered(1, c), 0.0);
  }
  EXPECT_THROW(gather_rows(g.constant(a), {6}), DimensionError);

  const Tensor mix = oracle::random_tensor(rng, 3, 2);
  EXPECT_LE(max_abs_diff(mix_blocks(g.constant(b), g.constant(mix), batch).value(),
                         oracle::lce(b, mix, batch)),
            1e-12);
}

TEST(Ops, BatchedMatmulMatchesPerBlockProducts) {
  auto rng = rng_for(6);
  const std::size_t batch = 4;
  const Tensor a = oracle::random_tensor(rng, batch * 2, 3), b = oracle::random_tensor(rng, batch * 3, 5);
  const Tensor bt = oracle::random_tensor(rng, batch * 5, 3);
  Graph g;
  const Tensor nn = batched_matmul(g.constant(a), g.constant(b), batch, false).value();
  const Tensor nt = batched_matmul(g.constant(a), g.constant(bt), batch, true).value();
  for (std::size_t e = 0; e < batch; ++e) {
    Tensor ae(2, 3), be(3, 5), bte(5, 3);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 3; ++j) ae(i, j) = a(e * 2 + i, j);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 5; ++j) be(i, j) = b(e * 3 + i, j);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) bte(i, j) = bt(e * 5 + i, j);
    const Tensor want = oracle::matmul(ae, be), want_t = oracle::matmul(ae, bte.transposed());
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 5; ++j) {
        EXPECT_NEAR(nn(e * 2 + i, j), want(i, j), 1e-12);
        EXPECT_NEAR(nt(e * 2 + i, j), want_t(i, j), 1e-12);
      }
  }
}

TEST(Ops, RopeMatchesOracleAndKeepsNorms) {
  auto rng = rng_for(7);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t group = 2 * (rng() % 4 + 1), heads = rng() % 3 + 1;
    const Tensor x = oracle::random_tensor(rng, 4, group * heads);
    std::vector<double> pos = {0, 1, 7, 33};
    Graph g;
    const Tensor y = rope(g.constant(x), pos, group).value();
    for (std::size_t r = 0; r < 4; ++r) {
      const auto row = x.row(r);
      const auto want = oracle::rope_vector({row.begin(), row.end()}, pos[r], group);
      for (std::size_t c = 0; c < x.cols(); ++c) EXPECT_NEAR(y(r, c), want[c], 1e-13);
      for (std::size_t c = 0; c < x.cols(); c += 2)
        EXPECT_NEAR(std::hypot(y(r, c), y(r, c + 1)), std::hypot(x(r, c), x(r, c + 1)), 1e-12);
    }
  }
  Graph g;
  EXPECT_THROW(rope(g.constant(Tensor(1, 3)), {0}, 3), ConfigError);
}

TEST(Ops, RopeInnerProductDependsOnlyOnOffset) {
  auto rng = rng_for(8);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t group = 2 * (rng() % 4 + 1);
    const Tensor q = oracle::random_tensor(rng, 1, group), k = oracle::random_tensor(rng, 1, group);
    const double m = double(rng() % 40), n = double(rng() % 40), s = double(rng() % 60);
    auto score = [&](double pm, double pn) {
      Graph g;
      const Tensor a = rope(g.constant(q), {pm}, group).value();
      const Tensor b = rope(g.constant(k), {pn}, group).value();
      double dot = 0;
      for (std::size_t c = 0; c < group; ++c) dot += a(0, c) * b(0, c);
      return dot;
    };
    EXPECT_NEAR(score(m, n), score(m + s, n + s), 1e-9);
  }
}

TEST(Ops, MatmulIsAssociative) {
  auto rng = rng_for(9);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t m = rng() % 6 + 1, k = rng() % 6 + 1, n = rng() % 6 + 1, q = rng() % 6 + 1;
    Graph g;
    Var a = g.constant(oracle::random_tensor(rng, m, k));
    Var b = g.constant(oracle::random_tensor(rng, k, n));
    Var c = g.constant(oracle::random_tensor(rng, n, q));
    EXPECT_LE(max_abs_diff(matmul(matmul(a, b), c).value(), matmul(a, matmul(b, c)).value()),
              1e-9);
  }
}
