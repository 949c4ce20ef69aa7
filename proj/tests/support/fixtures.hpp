#pragma once

#include "interformer/config.hpp"
#include "interformer/synthetic.hpp"

namespace fixture {

// Small enough that a full forward/backward takes milliseconds.
inline interformer::ModelConfig tiny_model() {
  interformer::ModelConfig c;
  c.layers = 2;
  c.embedding_dim = 4;
  c.heads = 2;
  c.cls_tokens = 2;
  c.summary_tokens = 2;
  c.pma_tokens = 1;
  c.recent_tokens = 2;
  c.pffn_hidden = 4;
  c.interaction_hidden = 8;
  c.fm_rank = 3;
  c.dcn_rank = 6;
  c.head_sizes = {32, 16};
  c.head_scale = 4;
  return c;
}

inline interformer::SyntheticConfig tiny_data(std::size_t examples = 40) {
  interformer::SyntheticConfig c;
  c.examples = examples;
  c.dense = 2;
  c.sparse = 3;
  c.category_vocab = 4;
  c.sparse_vocab = 5;
  c.users = 6;
  c.sequence_length = 5;
  c.embedding_dim = 4;
  return c;
}

}  // namespace fixture
