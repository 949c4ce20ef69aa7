#pragma once

#include <cstddef>
#include <cstdint>

#include "interformer/config.hpp"
#include "interformer/features.hpp"

namespace interformer {

// Synthetic CTR data with a controllable mix of non-sequence and sequence
// signal. Sparse feature 0 is the target item category and feature 1 the user
// bucket; the first sequence is the category history, drawn independently of
// every non-sequence feature, and the second is an uninformative action
// sequence. The sequence score counts history items matching the target
// category, weighting recent positions more.
struct SyntheticConfig {
  std::size_t examples = 20000;
  std::size_t dense = 3;
  std::size_t sparse = 5;          // including target category and user bucket
  std::size_t category_vocab = 8;
  std::size_t sparse_vocab = 16;   // remaining sparse features
  std::size_t users = 500;
  std::size_t sequences = 2;
  std::size_t sequence_length = 12;
  std::size_t min_sequence_length = 0;
  std::size_t action_vocab = 4;
  std::size_t embedding_dim = 8;

  double nonseq_weight = 1.0;
  double seq_weight = 1.5;
  double recency_decay = 0.5;  // weight of a match k steps back is decay^k
  double ctr = 0.3;
  // Threshold the score at the CTR quantile instead of sampling labels.
  bool deterministic_labels = false;
  double test_fraction = 0.15;

  FeatureSchema schema() const;
  void validate() const;

  friend bool operator==(const SyntheticConfig&, const SyntheticConfig&) = default;
};

KeyValues to_key_values(const SyntheticConfig& config);
void apply_key_values(SyntheticConfig& config, KeyValues& kv);

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace interformer
