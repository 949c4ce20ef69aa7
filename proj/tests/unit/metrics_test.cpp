#include <gtest/gtest.h>

#include <cmath>

#include "interformer/errors.hpp"
#include "interformer/metrics.hpp"
#include "interformer/optimizer.hpp"
#include "oracles.hpp"

using namespace interformer;

namespace {

struct Sample {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::int64_t> users;
};

// Scores drawn from a small grid so ties are common.
Sample random_sample(std::mt19937_64& rng, std::size_t n, std::size_t users) {
  Sample s;
  std::uniform_int_distribution<int> grid(0, 9);
  std::uniform_int_distribution<std::int64_t> user(0, std::int64_t(users) - 1);
  std::bernoulli_distribution click(0.35);
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(0.05 + 0.09 * grid(rng));
    s.labels.push_back(click(rng) ? 1 : 0);
    s.users.push_back(user(rng));
  }
  s.labels[0] = 1;
  s.labels[1] = 0;
  s.users[1] = s.users[0];
  return s;
}

}  // namespace

TEST(Auc, EqualsPairwiseOracleExactly) {
  std::mt19937_64 rng(101);
  for (int inst = 0; inst < 200; ++inst) {
    const Sample s = random_sample(rng, 2 + inst % 60, 5);
    EXPECT_EQ(auc(s.scores, s.labels), oracle::auc_pairs(s.scores, s.labels)) << inst;
  }
}

TEST(Gauc, EqualsPairwiseOracleExactly) {
  std::mt19937_64 rng(202);
  for (int inst = 0; inst < 200; ++inst) {
    const Sample s = random_sample(rng, 4 + inst % 80, 1 + inst % 7);
    EXPECT_EQ(gauc(s.scores, s.labels, s.users), oracle::gauc_pairs(s.scores, s.labels, s.users))
        << inst;
  }
}

TEST(Auc, KnownValues) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, std::vector<int>{0, 0, 1, 1}), 0.75);
  EXPECT_EQ(auc(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}), 0.5);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}), 1.0);
}

TEST(Auc, UndefinedWithoutBothClasses) {
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), UndefinedMetricError);
  EXPECT_THROW(gauc(std::vector<double>{0.1, 0.2, 0.3}, std::vector<int>{1, 0, 1},
                    std::vector<std::int64_t>{1, 2, 3}),
               UndefinedMetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}), DataError);
}

TEST(Auc, InvariantUnderMonotoneMapsAndComplementedByNegation) {
  std::mt19937_64 rng(3);
  for (int inst = 0; inst < 50; ++inst) {
    const Sample s = random_sample(rng, 40, 3);
    std::vector<double> mapped, negated;
    for (double x : s.scores) {
      mapped.push_back(std::exp(3 * x) - 7);
      negated.push_back(-x);
    }
    const double a = auc(s.scores, s.labels);
    EXPECT_EQ(auc(mapped, s.labels), a);
    EXPECT_NEAR(auc(negated, s.labels), 1.0 - a, 1e-15);
  }
}

TEST(Gauc, SingleUserCollapsesToAuc) {
  std::mt19937_64 rng(4);
  for (int inst = 0; inst < 50; ++inst) {
    Sample s = random_sample(rng, 30, 1);
    EXPECT_NEAR(gauc(s.scores, s.labels, s.users), auc(s.scores, s.labels), 1e-15);
  }
}

TEST(Ne, MatchesDirectFormula) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> prob(0.01, 0.99), ctr(0.05, 0.95);
  double worst = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 1 + inst % 50;
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = prob(rng);
      y[i] = prob(rng) < 0.4 ? 1 : 0;
    }
    const double c = ctr(rng);
    worst = std::max(worst, std::abs(normalized_entropy(logloss(p, y), c) - oracle::ne_direct(p, y, c)));
  }
  EXPECT_LT(worst, 1e-12);
}

TEST(Ne, InvariantToDatasetReplication) {
  const std::vector<double> p = {0.2, 0.7, 0.9, 0.4};
  const std::vector<int> y = {0, 1, 1, 0};
  std::vector<double> p3;
  std::vector<int> y3;
  for (int k = 0; k < 3; ++k) {
    p3.insert(p3.end(), p.begin(), p.end());
    y3.insert(y3.end(), y.begin(), y.end());
  }
  EXPECT_NEAR(normalized_entropy(logloss(p3, y3), 0.3), normalized_entropy(logloss(p, y), 0.3),
              1e-12);
  EXPECT_THROW(normalized_entropy(0.5, 0.0), UndefinedMetricError);
  EXPECT_THROW(logloss(std::vector<double>{1.0}, std::vector<int>{1}), NumericError);
}

TEST(Metrics, GaucIsNanWhenUndefined) {
  const Metrics m = compute_metrics(std::vector<double>{0.2, 0.8}, std::vector<int>{0, 1},
                                    std::vector<std::int64_t>{1, 2}, 0.5);
  EXPECT_TRUE(std::isnan(m.gauc));
  EXPECT_EQ(m.auc, 1.0);
}

TEST(CrossEntropy, ValueAndGradient) {
  Graph g;
  Var p = g.leaf(Tensor{{0.8}, {0.3}});
  const std::vector<int> y = {1, 0};
  Var loss = cross_entropy(p, y);
  const double want = -(std::log(0.8) + std::log(0.7)) / 2;
  EXPECT_NEAR(loss.value()(0, 0), want, 1e-15);
  g.backward(loss);
  EXPECT_NEAR(g.grad(p)(0, 0), -1.0 / (2 * 0.8), 1e-14);
  EXPECT_NEAR(g.grad(p)(1, 0), 1.0 / (2 * 0.7), 1e-14);
  EXPECT_THROW(cross_entropy(p, std::vector<int>{1, 3}), DataError);
  EXPECT_THROW(cross_entropy(p, std::vector<int>{1}), DimensionError);
}

TEST(Adam, MatchesScalarReference) {
  std::mt19937_64 rng(6);
  ParamStore params;
  params.add("w", oracle::random_tensor(rng, 2, 3));
  const AdamOptions opt{.lr = 0.05, .beta1 = 0.8, .beta2 = 0.99, .eps = 1e-7};
  Adam adam(params, opt);
  std::vector<oracle::AdamState> state(6);
  std::vector<double> ref(params.get("w").values().begin(), params.get("w").values().end());
  for (int step = 0; step < 25; ++step) {
    ParamStore grads = params.zeros_like();
    grads.get("w") = oracle::random_tensor(rng, 2, 3, -2, 2);
    for (std::size_t i = 0; i < 6; ++i)
      ref[i] = oracle::adam_scalar(ref[i], grads.get("w")[i], state[i], opt.lr, opt.beta1,
                                   opt.beta2, opt.eps);
    adam.step(params, grads);
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(params.get("w")[i], ref[i], 1e-14);
  EXPECT_EQ(adam.steps(), 25u);
}

TEST(Adam, RejectsForeignGradients) {
  ParamStore params;
  params.add("w", Tensor(2, 2));
  Adam adam(params);
  ParamStore wrong;
  wrong.add("v", Tensor(2, 2));
  EXPECT_THROW(adam.step(params, wrong), OptimizerError);
  ParamStore shape;
  shape.add("w", Tensor(1, 2));
  EXPECT_THROW(adam.step(params, shape), OptimizerError);
}
