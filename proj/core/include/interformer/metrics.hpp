#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "interformer/autograd.hpp"

namespace interformer {

// Mean binary cross-entropy of probabilities (batch x 1) against labels.
// Throws DataError for a label outside {0, 1}.
Var cross_entropy(Var probs, std::span<const int> labels);

// Probability that a random positive outscores a random negative, ties
// counting one half. Throws UndefinedMetricError without both classes.
double auc(std::span<const double> scores, std::span<const int> labels);

// Per-user AUC weighted by the user's positive count; users without both
// classes are skipped. Throws UndefinedMetricError when no user qualifies.
double gauc(std::span<const double> scores, std::span<const int> labels,
            std::span<const std::int64_t> users);

// Mean natural-log loss of clamped probabilities.
double logloss(std::span<const double> probs, std::span<const int> labels);

// logloss / H(p) with H the binary entropy of the training CTR p.
double normalized_entropy(double logloss, double ctr);

struct Metrics {
  double loss = 0;
  double auc = 0;
  double gauc = 0;  // NaN when undefined
  double ne = 0;
  friend bool operator==(const Metrics&, const Metrics&) = default;
};

Metrics compute_metrics(std::span<const double> probs, std::span<const int> labels,
                        std::span<const std::int64_t> users, double train_ctr);

}  // namespace interformer
