#include <gtest/gtest.h>

#include "interformer/errors.hpp"
#include "interformer/interaction.hpp"
#include "oracles.hpp"

using namespace interformer;

TEST(Fm, MatchesPairwiseSumOver100Instances) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> dim(1, 24), rank(1, 8), rows(1, 5);
  double worst = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t D = dim(rng), r = rank(rng), B = rows(rng);
    const Tensor x = oracle::random_tensor(rng, B, D, -2, 2);
    const Tensor v = oracle::random_tensor(rng, D, r);
    const Tensor w = oracle::random_tensor(rng, D, 1);
    const double w0 = std::uniform_real_distribution<double>(-1, 1)(rng);
    Graph g;
    const Tensor y = fm_second_order(g.constant(x), g.constant(v), g.constant(w),
                                     g.constant(Tensor::scalar(w0)))
                         .value();
    ASSERT_EQ(y.cols(), 1u);
    for (std::size_t b = 0; b < B; ++b) {
      const double want = oracle::fm_pairs(x, b, v, w, w0);
      worst = std::max(worst, std::abs(y(b, 0) - want));
    }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(Fm, RejectsMismatchedFactors) {
  Graph g;
  EXPECT_THROW(fm_second_order(g.constant(Tensor(2, 3)), g.constant(Tensor(4, 2)),
                               g.constant(Tensor(3, 1)), g.constant(Tensor(1, 1))),
               DimensionError);
}

TEST(Dot, UpperTriangleOfGram) {
  std::mt19937_64 rng(2);
  const std::size_t B = 3, N = 4, d = 5;
  const Tensor t = oracle::random_tensor(rng, B * N, d);
  Graph g;
  const Tensor out = dot_interaction(g.constant(t), B).value();
  ASSERT_EQ(out.cols(), N * (N + 1) / 2);
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t col = 0;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i; j < N; ++j, ++col) {
        double s = 0;
        for (std::size_t c = 0; c < d; ++c) s += t(b * N + i, c) * t(b * N + j, c);
        EXPECT_NEAR(out(b, col), s, 1e-12);
      }
  }
  EXPECT_THROW(dot_interaction(g.constant(t), 5), DimensionError);
}

TEST(Dcn, FullAndLowRankMatchOracle) {
  std::mt19937_64 rng(8);
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t B = 3, D = 6, r = 2;
    const Tensor x0 = oracle::random_tensor(rng, B, D), xl = oracle::random_tensor(rng, B, D);
    const Tensor w = oracle::random_tensor(rng, D, D), b = oracle::random_tensor(rng, 1, D);
    Graph g;
    const Tensor full =
        dcn_cross_layer(g.constant(x0), g.constant(xl), g.constant(w), Var{}, g.constant(b)).value();
    const Tensor want = oracle::dcn_cross(x0, xl, w, b);
    for (std::size_t i = 0; i < full.size(); ++i) EXPECT_NEAR(full[i], want[i], 1e-12);

    const Tensor u = oracle::random_tensor(rng, D, r), v = oracle::random_tensor(rng, r, D);
    const Tensor low = dcn_cross_layer(g.constant(x0), g.constant(xl), g.constant(u),
                                       g.constant(v), g.constant(b))
                           .value();
    const Tensor want_low = oracle::dcn_cross(x0, xl, oracle::matmul(u, v), b);
    for (std::size_t i = 0; i < low.size(); ++i) EXPECT_NEAR(low[i], want_low[i], 1e-12);
  }
}

TEST(Dcn, ZeroWeightsAreTheIdentity) {
  std::mt19937_64 rng(1);
  const Tensor x0 = oracle::random_tensor(rng, 2, 5), xl = oracle::random_tensor(rng, 2, 5);
  Graph g;
  EXPECT_EQ(dcn_cross_layer(g.constant(x0), g.constant(xl), g.constant(Tensor(5, 5)), Var{},
                            g.constant(Tensor(1, 5)))
                .value(),
            xl);
  EXPECT_THROW(dcn_cross_layer(g.constant(x0), g.constant(Tensor(2, 4)), g.constant(Tensor(4, 4)),
                               Var{}, g.constant(Tensor(1, 4))),
               DimensionError);
}

TEST(Dcn, RankFallsBackToFullWhenWidthIsSmall) {
  ModelConfig c;
  c.dcn_rank = 8;
  EXPECT_EQ(dcn_rank_for(c, 20), 8u);
  EXPECT_EQ(dcn_rank_for(c, 6), 6u);
  ParamStore store;
  Rng rng(0);
  init_dcn_params(store, rng, "d", c, 6);
  EXPECT_TRUE(store.contains("d.0.W"));
  init_dcn_params(store, rng, "e", c, 20);
  EXPECT_TRUE(store.contains("e.0.U"));
  EXPECT_EQ(store.get("e.1.V").rows(), 8u);
}

class BackboneTest : public ::testing::TestWithParam<Backbone> {};

TEST_P(BackboneTest, OutputWidthMatchesDeclared) {
  ModelConfig c;
  c.backbone = GetParam();
  c.fm_rank = 3;
  c.dcn_rank = 4;
  const std::size_t B = 3, N = 5, d = 4;
  ParamStore store;
  Rng rng(3);
  init_backbone_params(store, rng, "bb", c, N, d);
  std::mt19937_64 gen(4);
  Graph g;
  ParamBinding p(g, store);
  Var out = backbone_forward(p, "bb", c, g.constant(oracle::random_tensor(gen, B * N, d)), B);
  EXPECT_EQ(out.rows(), B);
  EXPECT_EQ(out.cols(), backbone_output_width(c, N, d));
}

TEST_P(BackboneTest, InteractionLayerPreservesXShape) {
  ModelConfig c;
  c.backbone = GetParam();
  c.interaction_hidden = 8;
  const std::size_t B = 2, N = 4, d = 4;
  std::mt19937_64 gen(5);
  for (std::size_t cs : {0u, 1u, 3u}) {
    ParamStore store;
    Rng rng(6);
    init_interaction_layer_params(store, rng, "il", c, N, cs, d);
    Graph g;
    ParamBinding p(g, store);
    Var x = g.constant(oracle::random_tensor(gen, B * N, d));
    Var s = g.constant(oracle::random_tensor(gen, B * std::max<std::size_t>(cs, 1), d));
    Var out = interaction_arch_layer(p, "il", c, x, N, s, cs, B);
    EXPECT_EQ(out.rows(), B * N);
    EXPECT_EQ(out.cols(), d);
    g.backward(sum(out));
  }
}

INSTANTIATE_TEST_SUITE_P(All, BackboneTest,
                         ::testing::Values(Backbone::kDot, Backbone::kFm, Backbone::kDcnV2,
                                           Backbone::kDhen),
                         [](const auto& info) { return std::string(backbone_name(info.param)); });

TEST(Interaction, RejectsWrongRowCount) {
  ModelConfig c;
  ParamStore store;
  Rng rng(0);
  init_interaction_layer_params(store, rng, "il", c, 3, 0, 4);
  Graph g;
  ParamBinding p(g, store);
  EXPECT_THROW(interaction_arch_layer(p, "il", c, g.constant(Tensor(5, 4)), 3, Var{}, 0, 2),
               DimensionError);
}

TEST(Dot, TokensWithoutBatchAlignmentAreRejectedByBackbone) {
  ModelConfig c;
  c.backbone = Backbone::kDot;
  ParamStore store;
  Graph g;
  ParamBinding p(g, store);
  EXPECT_THROW(backbone_forward(p, "bb", c, g.constant(Tensor(5, 2)), 2), DimensionError);
}
