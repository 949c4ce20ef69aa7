#include <gtest/gtest.h>

#include "interformer/cross.hpp"
#include "interformer/errors.hpp"
#include "oracles.hpp"

using namespace interformer;

TEST(Lce, MatchesOracle) {
  std::mt19937_64 rng(5);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t B = 3, N = 5, M = 1 + inst % 5, d = 4;
    const Tensor x = oracle::random_tensor(rng, B * N, d);
    const Tensor mix = oracle::random_tensor(rng, N, M);
    Graph g;
    const Tensor got = lce(g.constant(x), g.constant(mix), B).value();
    const Tensor want = oracle::lce(x, mix, B);
    ASSERT_EQ(got.rows(), B * M);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Lce, CannotExpand) {
  Graph g;
  EXPECT_THROW(lce(g.constant(Tensor(6, 2)), g.constant(Tensor(3, 4)), 2), ConfigError);
  ParamStore store;
  Rng rng(0);
  EXPECT_THROW(init_nonseq_summary_params(store, rng, "x", 3, 3, 2), ConfigError);
  EXPECT_THROW(init_nonseq_summary_params(store, rng, "x", 3, 0, 2), ConfigError);
}

TEST(Gating, TransparentWithZeroWeightsUnitBiasIdentitySigma) {
  std::mt19937_64 gen(1);
  const std::size_t B = 2, M = 3, d = 4;
  ParamStore store;
  Rng rng(0);
  init_gating_params(store, rng, "gate", M, d);
  store.get("gate.W") = Tensor(M * d, M * d);
  Graph g;
  ParamBinding p(g, store, false);
  const Tensor z = oracle::random_tensor(gen, B * M, d);
  EXPECT_EQ(self_gating(p, "gate", g.constant(z), B, Activation::kIdentity).value(), z);
}

TEST(Gating, IsElementwiseProductWithLinearMap) {
  std::mt19937_64 gen(2);
  const std::size_t B = 2, M = 2, d = 2, w = M * d;
  ParamStore store;
  Rng rng(3);
  init_gating_params(store, rng, "gate", M, d);
  Graph g;
  ParamBinding p(g, store, false);
  const Tensor z = oracle::random_tensor(gen, B * M, d);
  const Tensor out = self_gating(p, "gate", g.constant(z), B, Activation::kSigmoid).value();
  const Tensor& W = store.get("gate.W");
  const Tensor& b = store.get("gate.b");
  for (std::size_t e = 0; e < B; ++e)
    for (std::size_t j = 0; j < w; ++j) {
      double lin = b(0, j);
      for (std::size_t i = 0; i < w; ++i) lin += z[e * w + i] * W(i, j);
      const double want = 1.0 / (1.0 + std::exp(-z[e * w + j] * lin));
      EXPECT_NEAR(out[e * w + j], want, 1e-14);
    }
}

namespace {

ModelConfig summary_config(std::size_t pma, std::size_t recent) {
  ModelConfig c;
  c.embedding_dim = 2;
  c.heads = 1;
  c.pma_tokens = pma;
  c.recent_tokens = recent;
  c.gate_activation = Activation::kIdentity;
  return c;
}

void make_transparent(ParamStore& store, const std::string& gate) {
  Tensor& W = store.get(gate + ".W");
  W = Tensor(W.rows(), W.cols());
}

}  // namespace

TEST(SeqSummary, RecentTokensOldestFirstWithZeroRows) {
  const std::size_t cls = 1, T = 4, d = 2;
  ModelConfig c = summary_config(0, 3);
  c.cls_tokens = cls;
  ParamStore store;
  Rng rng(0);
  init_seq_summary_params(store, rng, "ss", c);
  make_transparent(store, "ss.gate");
  // Example 0 has 1 valid item, example 1 has all 4.
  Tensor s(2 * (cls + T), d);
  for (std::size_t r = 0; r < s.rows(); ++r) s(r, 0) = s(r, 1) = double(r + 1);
  Graph g;
  ParamBinding p(g, store, false);
  const Tensor out = summarize_seq(p, "ss", c, g.constant(s), cls, {1, 4}, T).value();
  ASSERT_EQ(out.rows(), 2u * 4u);
  const std::vector<double> want = {1, 0, 0, 5,  //
                                    6, 8, 9, 10};
  for (std::size_t r = 0; r < want.size(); ++r) {
    EXPECT_EQ(out(r, 0), want[r]) << r;
    EXPECT_EQ(out(r, 1), want[r]) << r;
  }
}

TEST(SeqSummary, ArityIsFixedAcrossSequenceLengths) {
  ModelConfig c = summary_config(2, 2);
  c.cls_tokens = 3;
  ParamStore store;
  Rng rng(4);
  init_seq_summary_params(store, rng, "ss", c);
  std::mt19937_64 gen(5);
  for (std::size_t T : {1u, 3u, 9u}) {
    Graph g;
    ParamBinding p(g, store, false);
    Var s = g.constant(oracle::random_tensor(gen, 2 * (3 + T), 2));
    Var out = summarize_seq(p, "ss", c, s, 3, {T, 1}, T);
    EXPECT_EQ(out.rows(), 2 * c.seq_summary_tokens());
  }
}

TEST(SeqSummary, IgnoresPaddedSlots) {
  ModelConfig c = summary_config(2, 2);
  c.cls_tokens = 1;
  c.gate_activation = Activation::kSigmoid;
  ParamStore store;
  Rng rng(6);
  init_seq_summary_params(store, rng, "ss", c);
  std::mt19937_64 gen(7);
  Tensor s = oracle::random_tensor(gen, 2 * 6, 2);
  auto run = [&](const Tensor& in) {
    Graph g;
    ParamBinding p(g, store, false);
    return summarize_seq(p, "ss", c, g.constant(in), 1, {2, 5}, 5).value();
  };
  const Tensor a = run(s);
  s(1, 0) = s(2, 1) = s(3, 0) = 1e4;
  EXPECT_EQ(run(s), a);
}

TEST(NonseqSummary, ShapeAndTransparentGate) {
  std::mt19937_64 gen(8);
  const std::size_t B = 3, N = 5, M = 2, d = 3;
  ParamStore store;
  Rng rng(9);
  init_nonseq_summary_params(store, rng, "xs", N, M, d);
  make_transparent(store, "xs.gate");
  const Tensor x = oracle::random_tensor(gen, B * N, d);
  Graph g;
  ParamBinding p(g, store, false);
  const Tensor out = summarize_nonseq(p, "xs", g.constant(x), B, Activation::kIdentity).value();
  const Tensor want = oracle::lce(x, store.get("xs.lce"), B);
  ASSERT_EQ(out.rows(), B * M);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_NEAR(out[i], want[i], 1e-12);
}
