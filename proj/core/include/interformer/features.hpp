#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "interformer/autograd.hpp"
#include "interformer/config.hpp"
#include "interformer/params.hpp"

namespace interformer {

struct SparseSpec {
  std::string name;
  std::size_t vocab = 1;
  friend bool operator==(const SparseSpec&, const SparseSpec&) = default;
};

struct SequenceSpec {
  std::string name;
  std::size_t vocab = 1;
  std::size_t max_length = 1;
  friend bool operator==(const SequenceSpec&, const SequenceSpec&) = default;
};

struct FeatureSchema {
  std::size_t dense_count = 0;
  std::vector<SparseSpec> sparse;
  std::vector<SequenceSpec> sequences;
  std::size_t embedding_dim = 8;

  // Throws ConfigError. All sequences must share one max_length.
  void validate() const;
  // Columns of the embedded non-sequence matrix: the dense block plus one per
  // sparse feature.
  std::size_t nonseq_tokens() const { return 1 + sparse.size(); }
  std::size_t sequence_length() const;

  friend bool operator==(const FeatureSchema&, const FeatureSchema&) = default;
};

KeyValues to_key_values(const FeatureSchema& schema);
// Reads the schema_* keys written by to_key_values, erasing them from `kv`.
FeatureSchema schema_from_key_values(KeyValues& kv);

enum class Split : std::uint8_t { kTrain, kTest };

// One raw example. Sequences are chronological (oldest first) and may be
// shorter or longer than the schema's max_length.
struct Record {
  int label = 0;
  std::int64_t user_id = 0;
  std::vector<double> dense;
  std::vector<std::int64_t> sparse;
  std::vector<std::vector<std::int64_t>> sequences;
  Split split = Split::kTrain;
  friend bool operator==(const Record&, const Record&) = default;
};

struct Dataset {
  FeatureSchema schema;
  std::vector<Record> records;

  std::vector<std::size_t> indices(Split split) const;
  // Mean train label; throws DataError unless it lies strictly inside (0, 1).
  double background_ctr() const;
};

// Model-ready integer view of a minibatch. Sequences are left-padded to the
// schema's max_length so the most recent item always sits in the last column;
// padding slots hold -1.
struct RawBatch {
  std::size_t size = 0;
  Tensor dense;                               // size x dense_count
  std::vector<std::ptrdiff_t> sparse;         // size x n, row-major
  std::vector<std::vector<std::ptrdiff_t>> sequences;  // k entries of size x T
  std::vector<std::size_t> seq_len;
  std::vector<int> labels;
  std::vector<std::int64_t> user_ids;
};

// Validates every record against the schema (arity, vocabulary) and throws
// SchemaError / IngestionError naming the feature and offending index.
RawBatch make_batch(const Dataset& data, std::span<const std::size_t> indices);
RawBatch make_batch(const FeatureSchema& schema, std::span<const Record> records);

// Embedded minibatch in token layout: every example contributes a block of
// rows, one row (length d) per token.
struct FeatureBatch {
  std::size_t size = 0;
  Var x;  // size * (1 + n) rows: dense block first, then sparse in schema order
  Var s;  // size * T rows after MaskNet
  std::vector<std::size_t> seq_len;
  std::vector<int> labels;
  std::vector<std::int64_t> user_ids;
};

struct EmbeddedInputs {
  Var x;
  std::vector<Var> sequences;  // k tensors of size * T rows
};

void init_feature_params(ParamStore& store, Rng& rng, const FeatureSchema& schema);

// Dense vector projected by "embed.dense" then sparse lookups from
// "embed.sparse.<name>"; sequence items from "embed.seq.<name>".
EmbeddedInputs embed_batch(const FeatureSchema& schema, const RawBatch& raw,
                           ParamBinding& params);

// MaskNet(S) = MLP_lce(S ⊙ MLP_mask(S)) applied per time step over the k
// sequences stacked along the embedding axis. `prefix` selects the
// parameters ("<prefix>.mask", "<prefix>.lce").
Var mask_net(std::span<const Var> sequences, ParamBinding& params, const std::string& prefix);
void init_mask_net_params(ParamStore& store, Rng& rng, const std::string& prefix,
                          std::size_t sequence_count, std::size_t dim);

FeatureBatch preprocess(const FeatureSchema& schema, const RawBatch& raw, ParamBinding& params);

}  // namespace interformer
