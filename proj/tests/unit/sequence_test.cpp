#include <gtest/gtest.h>

#include "interformer/errors.hpp"
#include "interformer/sequence.hpp"
#include "oracles.hpp"

using namespace interformer;

namespace {

std::vector<double> random_positions(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> p(n);
  std::uniform_int_distribution<int> pos(0, 30);
  for (double& v : p) v = pos(rng);
  return p;
}

}  // namespace

TEST(Mha, MatchesLoopOracleOver100Instances) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> pick_heads(1, 3), pick_dk(1, 3), pick_t(1, 6),
      pick_b(1, 3);
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const bool use_rope = inst % 2 == 1;
    const std::size_t heads = pick_heads(rng), dk = 2 * pick_dk(rng), d = heads * dk;
    const std::size_t B = pick_b(rng), tq = pick_t(rng), tk = pick_t(rng);
    const Tensor queries = oracle::random_tensor(rng, B * tq, d);
    const Tensor kv = oracle::random_tensor(rng, B * tk, d);
    ParamStore store;
    Rng init(inst);
    init_attention_params(store, init, "a", d, heads);
    KeyMask mask = KeyMask::all_valid(B, tk);
    std::bernoulli_distribution drop(0.3);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 1; j < tk; ++j) mask.valid[b * tk + j] = drop(rng) ? 0 : 1;
    Positions pos;
    if (use_rope) {
      pos.query = random_positions(rng, B * tq);
      pos.key = random_positions(rng, B * tk);
    }
    Graph g;
    ParamBinding p(g, store, false);
    const Tensor got =
        multi_head_attention(p, "a", g.constant(queries), g.constant(kv), heads, mask, pos).value();
    const Tensor want =
        oracle::mha_loop(queries, kv, store.get("a.Wq"), store.get("a.Wk"), store.get("a.Wv"),
                         store.get("a.Wo"), heads, B, mask.valid, pos.query, pos.key);
    ASSERT_EQ(got.rows(), want.rows());
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(Mha, HeadsMustDivideWidth) {
  ParamStore store;
  Rng rng(0);
  EXPECT_THROW(init_attention_params(store, rng, "a", 6, 4), ConfigError);
}

TEST(Attention, FullyMaskedQueryIsAnError) {
  KeyMask mask = KeyMask::all_valid(2, 3);
  mask.valid[3] = mask.valid[4] = mask.valid[5] = 0;
  Graph g;
  Var q = g.constant(Tensor(2, 2, 1.0)), k = g.constant(Tensor(6, 2, 1.0));
  EXPECT_THROW(scaled_dot_attention(q, k, k, mask), DegenerateAttentionError);
}

TEST(KeyMask, ForSequenceMarksClsAndRightAlignedItems) {
  const KeyMask m = KeyMask::for_sequence({2, 0, 5}, 1, 4);
  EXPECT_EQ(m.tokens, 5u);
  EXPECT_EQ(m.valid, (std::vector<std::uint8_t>{1, 0, 0, 1, 1,  //
                                                 1, 0, 0, 0, 0,  //
                                                 1, 1, 1, 1, 1}));
  EXPECT_EQ(m.expand(2).size(), 3u * 2u * 5u);
}

TEST(Pffn, IsIdentityAtInitialization) {
  std::mt19937_64 gen(2);
  const std::size_t B = 3, ns = 2, T = 4, d = 4;
  ParamStore store;
  Rng rng(1);
  init_pffn_params(store, rng, "f", ns, d, 8);
  Graph g;
  ParamBinding p(g, store, false);
  const Tensor s = oracle::random_tensor(gen, B * T, d);
  const Tensor out = pffn(p, "f", g.constant(oracle::random_tensor(gen, B * ns, d)), ns,
                          g.constant(s), B, Activation::kSwish)
                         .value();
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(out[i], s[i], 1e-15);
}

TEST(Pffn, AppliesPerExampleTransform) {
  // Set the output bias so F_b = I + E where E has a single 1 at (0, 1):
  // each row s becomes (F s)ᵀ, so column 0 picks up column 1.
  const std::size_t B = 2, ns = 1, d = 2;
  ParamStore store;
  Rng rng(1);
  init_pffn_params(store, rng, "f", ns, d, 3);
  store.get("f.f.1.b")(0, 1) = 1.0;
  Graph g;
  ParamBinding p(g, store, false);
  const Tensor s{{1, 2}, {3, 4}, {5, 6}, {7, 8}};
  const Tensor out =
      pffn(p, "f", g.constant(Tensor(B * ns, d, 0.3)), ns, g.constant(s), B, Activation::kRelu)
          .value();
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_NEAR(out(r, 0), s(r, 0) + s(r, 1), 1e-15);
    EXPECT_NEAR(out(r, 1), s(r, 1), 1e-15);
  }
}

TEST(Pma, ReturnsSeedCountRowsPerExample) {
  std::mt19937_64 gen(4);
  for (std::size_t k : {1u, 3u}) {
    ParamStore store;
    Rng rng(2);
    init_pma_params(store, rng, "pma", 4, 2, k);
    Graph g;
    ParamBinding p(g, store);
    const KeyMask mask = KeyMask::for_sequence({3, 1}, 0, 3);
    Var out = pma(p, "pma", g.constant(oracle::random_tensor(gen, 6, 4)), 2, mask);
    EXPECT_EQ(out.rows(), 2 * k);
    EXPECT_EQ(out.cols(), 4u);
  }
  ParamStore store;
  Rng rng(0);
  EXPECT_THROW(init_pma_params(store, rng, "pma", 4, 2, 0), ConfigError);
}

TEST(SequenceLayer, PaddedSlotsDoNotAffectValidOutputs) {
  ModelConfig c;
  c.embedding_dim = 4;
  c.heads = 2;
  const std::size_t B = 2, cls = 1, T = 5, ns = 2, d = 4;
  ParamStore store;
  Rng rng(3);
  init_sequence_layer_params(store, rng, "seq", c, ns);
  std::mt19937_64 gen(9);
  const std::vector<std::size_t> len = {2, 5};
  const KeyMask mask = KeyMask::for_sequence(len, cls, T);
  Tensor s = oracle::random_tensor(gen, B * (cls + T), d);
  const Tensor xs = oracle::random_tensor(gen, B * ns, d);
  auto run = [&](const Tensor& input) {
    Graph g;
    ParamBinding p(g, store, false);
    return sequence_arch_layer(p, "seq", c, g.constant(input), g.constant(xs), ns, mask).value();
  };
  const Tensor a = run(s);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t col = 0; col < d; ++col) s(cls + t, col) = 1e3 * (t + 1);
  const Tensor b = run(s);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    if (!mask.valid[r]) continue;
    for (std::size_t col = 0; col < d; ++col) EXPECT_EQ(a(r, col), b(r, col)) << r;
  }
}

TEST(SequenceLayer, RejectsMismatchedMask) {
  ModelConfig c;
  c.embedding_dim = 4;
  ParamStore store;
  Rng rng(3);
  init_sequence_layer_params(store, rng, "seq", c, 1);
  Graph g;
  ParamBinding p(g, store);
  EXPECT_THROW(sequence_arch_layer(p, "seq", c, g.constant(Tensor(7, 4)), g.constant(Tensor(2, 4)),
                                   1, KeyMask::all_valid(2, 3)),
               DimensionError);
}

TEST(Positions, ClsFirstThenSlots) {
  EXPECT_EQ(sequence_positions(2, 3), (std::vector<double>{0, 1, 2, 0, 1, 2}));
}
