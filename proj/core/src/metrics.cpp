#include "interformer/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <map>
#include <numeric>

#include "interformer/errors.hpp"

namespace interformer {

namespace {

void check_labels(std::span<const int> labels) {
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw DataError(fmt::format("label {} at position {} is not 0 or 1", labels[i], i));
    }
  }
}

}  // namespace

Var cross_entropy(Var probs, std::span<const int> labels) {
  if (probs.cols() != 1 || probs.rows() != labels.size()) {
    throw DimensionError(fmt::format("cross_entropy: probabilities {} for {} labels",
                                     probs.value().shape_string(), labels.size()));
  }
  check_labels(labels);
  Graph& g = probs.graph();
  const std::size_t n = labels.size();
  Tensor y(n, 1), one_minus_y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    y(i, 0) = labels[i];
    one_minus_y(i, 0) = 1 - labels[i];
  }
  Var ones = g.constant(Tensor::ones(n, 1));
  Var pos = hadamard(g.constant(std::move(y)), log(probs));
  Var neg = hadamard(g.constant(std::move(one_minus_y)), log(sub(ones, probs)));
  return scale(mean(add(pos, neg)), -1.0);
}

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError(fmt::format("auc: {} scores for {} labels", scores.size(), labels.size()));
  }
  check_labels(labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Sum of positive ranks with tied groups sharing their average rank; the
  // ranks are kept doubled so every quantity stays an exact integer.
  std::uint64_t positives = 0, twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t twice_avg = i + j + 1;  // 2 * mean of ranks i+1..j
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        ++positives;
        twice_rank_sum += twice_avg;
      }
    }
    i = j;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw UndefinedMetricError("AUC needs at least one positive and one negative");
  }
  // U = rank_sum - P(P+1)/2, so 2U is an integer.
  const std::uint64_t twice_u = twice_rank_sum - positives * (positives + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) *
                                         static_cast<double>(negatives));
}

double gauc(std::span<const double> scores, std::span<const int> labels,
            std::span<const std::int64_t> users) {
  if (scores.size() != labels.size() || users.size() != labels.size()) {
    throw DimensionError("gauc: scores, labels and users differ in length");
  }
  check_labels(labels);
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < users.size(); ++i) groups[users[i]].push_back(i);
  double weighted = 0, weight = 0;
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& [user, idx] : groups) {
    s.clear();
    y.clear();
    std::size_t pos = 0;
    for (std::size_t i : idx) {
      s.push_back(scores[i]);
      y.push_back(labels[i]);
      pos += labels[i];
    }
    if (pos == 0 || pos == idx.size()) continue;
    weighted += static_cast<double>(pos) * auc(s, y);
    weight += static_cast<double>(pos);
  }
  if (weight == 0) throw UndefinedMetricError("gAUC: no user has both clicks and non-clicks");
  return weighted / weight;
}

double logloss(std::span<const double> probs, std::span<const int> labels) {
  if (probs.size() != labels.size() || probs.empty()) {
    throw DimensionError(fmt::format("logloss: {} probabilities for {} labels", probs.size(),
                                     labels.size()));
  }
  check_labels(labels);
  double total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!(probs[i] > 0.0 && probs[i] < 1.0)) {
      throw NumericError(fmt::format("logloss: probability {} outside (0, 1)", probs[i]));
    }
    total -= labels[i] == 1 ? std::log(probs[i]) : std::log(1.0 - probs[i]);
  }
  return total / static_cast<double>(probs.size());
}

double normalized_entropy(double logloss_value, double ctr) {
  if (!(ctr > 0.0 && ctr < 1.0)) {
    throw UndefinedMetricError(fmt::format("NE needs a CTR inside (0, 1), got {}", ctr));
  }
  const double h = -(ctr * std::log(ctr) + (1.0 - ctr) * std::log(1.0 - ctr));
  return logloss_value / h;
}

Metrics compute_metrics(std::span<const double> probs, std::span<const int> labels,
                        std::span<const std::int64_t> users, double train_ctr) {
  Metrics m;
  m.loss = logloss(probs, labels);
  m.auc = auc(probs, labels);
  try {
    m.gauc = gauc(probs, labels, users);
  } catch (const UndefinedMetricError&) {
    m.gauc = std::numeric_limits<double>::quiet_NaN();
  }
  m.ne = normalized_entropy(m.loss, train_ctr);
  return m;
}

}  // namespace interformer
