#include "interformer/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>
#include <random>

#include "interformer/errors.hpp"

namespace interformer {

FeatureSchema SyntheticConfig::schema() const {
  FeatureSchema s;
  s.dense_count = dense;
  s.embedding_dim = embedding_dim;
  for (std::size_t i = 0; i < sparse; ++i) {
    if (i == 0) {
      s.sparse.push_back({"target_cat", category_vocab});
    } else if (i == 1) {
      s.sparse.push_back({"user_bucket", std::min(users, sparse_vocab)});
    } else {
      s.sparse.push_back({fmt::format("f{}", i), sparse_vocab});
    }
  }
  for (std::size_t i = 0; i < sequences; ++i) {
    if (i == 0) {
      s.sequences.push_back({"hist_cat", category_vocab, sequence_length});
    } else {
      s.sequences.push_back({fmt::format("hist_act{}", i), action_vocab, sequence_length});
    }
  }
  return s;
}

void SyntheticConfig::validate() const {
  if (examples < 2) throw ConfigError("synthetic data needs at least 2 examples");
  if (sparse < 1) throw ConfigError("synthetic data needs the target-category sparse feature");
  if (sequences < 1) throw ConfigError("synthetic data needs the category history sequence");
  if (users < 1 || category_vocab < 1 || sparse_vocab < 1 || action_vocab < 1) {
    throw ConfigError("synthetic vocabularies must be non-empty");
  }
  if (min_sequence_length > sequence_length) {
    throw ConfigError(fmt::format("min_sequence_length {} exceeds sequence_length {}",
                                  min_sequence_length, sequence_length));
  }
  if (nonseq_weight == 0.0 && seq_weight == 0.0) {
    throw ConfigError("synthetic label rule has all-zero signal weights");
  }
  if (!(ctr > 0.0 && ctr < 1.0)) throw ConfigError(fmt::format("ctr {} not inside (0, 1)", ctr));
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError(fmt::format("test_fraction {} not inside (0, 1)", test_fraction));
  }
  if (!(recency_decay > 0.0 && recency_decay <= 1.0)) {
    throw ConfigError("recency_decay must lie in (0, 1]");
  }
  schema().validate();
}

KeyValues to_key_values(const SyntheticConfig& c) {
  KeyValues kv;
  kv["data_examples"] = std::to_string(c.examples);
  kv["data_dense"] = std::to_string(c.dense);
  kv["data_sparse"] = std::to_string(c.sparse);
  kv["data_category_vocab"] = std::to_string(c.category_vocab);
  kv["data_sparse_vocab"] = std::to_string(c.sparse_vocab);
  kv["data_users"] = std::to_string(c.users);
  kv["data_sequences"] = std::to_string(c.sequences);
  kv["data_sequence_length"] = std::to_string(c.sequence_length);
  kv["data_min_sequence_length"] = std::to_string(c.min_sequence_length);
  kv["data_action_vocab"] = std::to_string(c.action_vocab);
  kv["data_nonseq_weight"] = fmt::format("{}", c.nonseq_weight);
  kv["data_seq_weight"] = fmt::format("{}", c.seq_weight);
  kv["data_recency_decay"] = fmt::format("{}", c.recency_decay);
  kv["data_ctr"] = fmt::format("{}", c.ctr);
  kv["data_deterministic_labels"] = c.deterministic_labels ? "true" : "false";
  kv["data_test_fraction"] = fmt::format("{}", c.test_fraction);
  return kv;
}

void apply_key_values(SyntheticConfig& c, KeyValues& kv) {
  auto take = [&](const char* key, auto&& apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    apply(key, it->second);
    kv.erase(it);
  };
  auto count = [](std::size_t& f) {
    return [&f](const char* k, const std::string& v) { f = parse_count(k, v); };
  };
  auto real = [](double& f) {
    return [&f](const char* k, const std::string& v) { f = parse_real(k, v); };
  };
  take("data_examples", count(c.examples));
  take("data_dense", count(c.dense));
  take("data_sparse", count(c.sparse));
  take("data_category_vocab", count(c.category_vocab));
  take("data_sparse_vocab", count(c.sparse_vocab));
  take("data_users", count(c.users));
  take("data_sequences", count(c.sequences));
  take("data_sequence_length", count(c.sequence_length));
  take("data_min_sequence_length", count(c.min_sequence_length));
  take("data_action_vocab", count(c.action_vocab));
  take("data_nonseq_weight", real(c.nonseq_weight));
  take("data_seq_weight", real(c.seq_weight));
  take("data_recency_decay", real(c.recency_decay));
  take("data_ctr", real(c.ctr));
  take("data_deterministic_labels", [&](const char* k, const std::string& v) {
    if (v == "true" || v == "1") {
      c.deterministic_labels = true;
    } else if (v == "false" || v == "0") {
      c.deterministic_labels = false;
    } else {
      throw ConfigError(fmt::format("{}: '{}' is not a boolean", k, v));
    }
  });
  take("data_test_fraction", real(c.test_fraction));
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void standardize(std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  const double mu = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double var = 0;
  for (double x : v) var += (x - mu) * (x - mu);
  const double sd = std::sqrt(var / n);
  for (double& x : v) x = sd > 0 ? (x - mu) / sd : 0.0;
}

}  // namespace

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset data;
  data.schema = config.schema();
  const FeatureSchema& schema = data.schema;
  const std::size_t n = config.examples, T = config.sequence_length;

  // Ground-truth effects of the non-sequence features.
  std::vector<double> dense_w(config.dense);
  for (double& w : dense_w) w = normal(rng);
  std::vector<std::vector<double>> sparse_effect(schema.sparse.size());
  for (std::size_t f = 0; f < schema.sparse.size(); ++f) {
    sparse_effect[f].resize(schema.sparse[f].vocab);
    for (double& e : sparse_effect[f]) e = normal(rng);
  }
  std::vector<double> match_weight(T);
  for (std::size_t age = 0; age < T; ++age) match_weight[age] = std::pow(config.recency_decay, age);

  std::vector<double> z_n(n), z_s(n);
  data.records.resize(n);
  std::uniform_int_distribution<std::size_t> user_dist(0, config.users - 1);
  std::uniform_int_distribution<std::size_t> len_dist(config.min_sequence_length, T);
  for (std::size_t i = 0; i < n; ++i) {
    Record& r = data.records[i];
    r.user_id = static_cast<std::int64_t>(user_dist(rng));
    r.dense.resize(config.dense);
    double score = 0;
    for (std::size_t c = 0; c < config.dense; ++c) {
      r.dense[c] = normal(rng);
      score += dense_w[c] * r.dense[c];
    }
    r.sparse.resize(schema.sparse.size());
    for (std::size_t f = 0; f < schema.sparse.size(); ++f) {
      std::size_t v;
      if (f == 1) {
        v = static_cast<std::size_t>(r.user_id) % schema.sparse[f].vocab;
      } else {
        v = std::uniform_int_distribution<std::size_t>(0, schema.sparse[f].vocab - 1)(rng);
      }
      r.sparse[f] = static_cast<std::int64_t>(v);
      score += sparse_effect[f][v];
    }
    z_n[i] = score;

    const std::size_t len = len_dist(rng);
    r.sequences.assign(schema.sequences.size(), {});
    for (std::size_t s = 0; s < schema.sequences.size(); ++s) {
      std::uniform_int_distribution<std::int64_t> item(
          0, static_cast<std::int64_t>(schema.sequences[s].vocab) - 1);
      for (std::size_t t = 0; t < len; ++t) r.sequences[s].push_back(item(rng));
    }
    double match = 0;
    const auto& hist = r.sequences[0];
    for (std::size_t t = 0; t < len; ++t) {
      if (hist[t] == r.sparse[0]) match += match_weight[len - 1 - t];
    }
    z_s[i] = match;
  }
  standardize(z_n);
  standardize(z_s);

  std::vector<double> score(n);
  for (std::size_t i = 0; i < n; ++i) {
    score[i] = config.nonseq_weight * z_n[i] + config.seq_weight * z_s[i];
  }

  if (config.deterministic_labels) {
    std::vector<double> sorted = score;
    const auto k = static_cast<std::size_t>(std::llround((1.0 - config.ctr) * n));
    std::nth_element(sorted.begin(), sorted.begin() + std::min(k, n - 1), sorted.end());
    const double cut = sorted[std::min(k, n - 1)];
    for (std::size_t i = 0; i < n; ++i) data.records[i].label = score[i] >= cut ? 1 : 0;
  } else {
    // Intercept chosen so the expected CTR hits the target.
    double lo = -50, hi = 50;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      double m = 0;
      for (double s : score) m += sigmoid(s + mid);
      (m / static_cast<double>(n) < config.ctr ? lo : hi) = mid;
    }
    const double bias = 0.5 * (lo + hi);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      data.records[i].label = unit(rng) < sigmoid(score[i] + bias) ? 1 : 0;
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto test_count = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(n))));
  for (std::size_t j = 0; j < test_count && j < n; ++j) data.records[order[j]].split = Split::kTest;
  return data;
}

}  // namespace interformer
