#include "interformer/features.hpp"

#include <cmath>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

void FeatureSchema::validate() const {
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  for (const auto& s : sparse) {
    if (s.vocab < 1) throw ConfigError(fmt::format("sparse '{}' has an empty vocabulary", s.name));
  }
  if (sequences.empty()) throw ConfigError("schema needs at least one sequence feature");
  for (const auto& s : sequences) {
    if (s.vocab < 1) throw ConfigError(fmt::format("sequence '{}' has an empty vocabulary", s.name));
    if (s.max_length < 1) throw ConfigError(fmt::format("sequence '{}' has max_length 0", s.name));
    if (s.max_length != sequences.front().max_length) {
      throw ConfigError(fmt::format("sequence '{}' has length {} but '{}' has {}", s.name,
                                    s.max_length, sequences.front().name,
                                    sequences.front().max_length));
    }
  }
}

std::size_t FeatureSchema::sequence_length() const {
  return sequences.empty() ? 0 : sequences.front().max_length;
}

KeyValues to_key_values(const FeatureSchema& schema) {
  KeyValues kv;
  kv["schema_dense"] = std::to_string(schema.dense_count);
  kv["schema_dim"] = std::to_string(schema.embedding_dim);
  std::string sparse, seqs;
  for (const auto& s : schema.sparse) {
    if (!sparse.empty()) sparse += ',';
    sparse += fmt::format("{}:{}", s.name, s.vocab);
  }
  for (const auto& s : schema.sequences) {
    if (!seqs.empty()) seqs += ',';
    seqs += fmt::format("{}:{}:{}", s.name, s.vocab, s.max_length);
  }
  kv["schema_sparse"] = sparse;
  kv["schema_sequences"] = seqs;
  return kv;
}

namespace {

std::vector<std::string> split(std::string_view text, char sep) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  while (true) {
    const auto pos = text.find(sep);
    out.emplace_back(text.substr(0, pos));
    if (pos == std::string_view::npos) break;
    text.remove_prefix(pos + 1);
  }
  return out;
}

std::string take_key(KeyValues& kv, const char* key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw ConfigError(fmt::format("missing key '{}'", key));
  std::string v = it->second;
  kv.erase(it);
  return v;
}

}  // namespace

FeatureSchema schema_from_key_values(KeyValues& kv) {
  FeatureSchema schema;
  schema.dense_count = parse_count("schema_dense", take_key(kv, "schema_dense"));
  schema.embedding_dim = parse_count("schema_dim", take_key(kv, "schema_dim"));
  for (const auto& item : split(take_key(kv, "schema_sparse"), ',')) {
    auto parts = split(item, ':');
    if (parts.size() != 2) throw ConfigError(fmt::format("bad sparse spec '{}'", item));
    schema.sparse.push_back({parts[0], parse_count("schema_sparse", parts[1])});
  }
  for (const auto& item : split(take_key(kv, "schema_sequences"), ',')) {
    auto parts = split(item, ':');
    if (parts.size() != 3) throw ConfigError(fmt::format("bad sequence spec '{}'", item));
    schema.sequences.push_back({parts[0], parse_count("schema_sequences", parts[1]),
                                parse_count("schema_sequences", parts[2])});
  }
  schema.validate();
  return schema;
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

double Dataset::background_ctr() const {
  double pos = 0;
  std::size_t n = 0;
  for (const auto& r : records) {
    if (r.split != Split::kTrain) continue;
    pos += r.label;
    ++n;
  }
  if (n == 0) throw DataError("dataset has no training examples");
  const double p = pos / static_cast<double>(n);
  if (!(p > 0.0 && p < 1.0)) {
    throw DataError(fmt::format("background CTR {} is not inside (0, 1)", p));
  }
  return p;
}

RawBatch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  std::vector<Record> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) picked.push_back(data.records.at(i));
  return make_batch(data.schema, picked);
}

RawBatch make_batch(const FeatureSchema& schema, std::span<const Record> records) {
  const std::size_t b = records.size();
  const std::size_t m = schema.dense_count, n = schema.sparse.size();
  const std::size_t k = schema.sequences.size(), t_max = schema.sequence_length();
  RawBatch raw;
  raw.size = b;
  raw.dense = Tensor(b, m);
  raw.sparse.resize(b * n);
  raw.sequences.assign(k, std::vector<std::ptrdiff_t>(b * t_max, -1));
  raw.seq_len.resize(b);
  raw.labels.resize(b);
  raw.user_ids.resize(b);
  for (std::size_t i = 0; i < b; ++i) {
    const Record& r = records[i];
    if (r.dense.size() != m) {
      throw SchemaError(fmt::format("example {} has {} dense values, schema expects {}", i,
                                    r.dense.size(), m));
    }
    if (r.sparse.size() != n || r.sequences.size() != k) {
      throw SchemaError(fmt::format("example {} has {} sparse / {} sequence features, expected {} / {}",
                                    i, r.sparse.size(), r.sequences.size(), n, k));
    }
    if (r.label != 0 && r.label != 1) {
      throw DataError(fmt::format("example {} has label {}", i, r.label));
    }
    for (std::size_t c = 0; c < m; ++c) raw.dense(i, c) = r.dense[c];
    for (std::size_t f = 0; f < n; ++f) {
      const auto v = r.sparse[f];
      if (v < 0 || static_cast<std::size_t>(v) >= schema.sparse[f].vocab) {
        throw IngestionError(fmt::format("sparse feature '{}' index {} outside vocabulary of {}",
                                         schema.sparse[f].name, v, schema.sparse[f].vocab));
      }
      raw.sparse[i * n + f] = v;
    }
    std::size_t len = 0;
    for (std::size_t s = 0; s < k; ++s) {
      const auto& seq = r.sequences[s];
      const std::size_t keep = std::min(seq.size(), t_max);
      len = std::max(len, keep);
      // Keep the `keep` most recent items, right-aligned.
      for (std::size_t j = 0; j < keep; ++j) {
        const auto v = seq[seq.size() - keep + j];
        if (v < 0 || static_cast<std::size_t>(v) >= schema.sequences[s].vocab) {
          throw IngestionError(
              fmt::format("sequence feature '{}' index {} outside vocabulary of {}",
                          schema.sequences[s].name, v, schema.sequences[s].vocab));
        }
        raw.sequences[s][i * t_max + (t_max - keep + j)] = v;
      }
    }
    raw.seq_len[i] = len;
    raw.labels[i] = r.label;
    raw.user_ids[i] = r.user_id;
  }
  return raw;
}

void init_feature_params(ParamStore& store, Rng& rng, const FeatureSchema& schema) {
  schema.validate();
  const std::size_t d = schema.embedding_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  if (schema.dense_count > 0) store.add("embed.dense", glorot_tensor(rng, schema.dense_count, d));
  for (const auto& s : schema.sparse)
    store.add("embed.sparse." + s.name, uniform_tensor(rng, s.vocab, d, bound));
  for (const auto& s : schema.sequences)
    store.add("embed.seq." + s.name, uniform_tensor(rng, s.vocab, d, bound));
}

EmbeddedInputs embed_batch(const FeatureSchema& schema, const RawBatch& raw,
                           ParamBinding& params) {
  Graph& g = params.graph();
  const std::size_t b = raw.size, d = schema.embedding_dim, n = schema.sparse.size();
  if (raw.dense.rows() != b || raw.dense.cols() != schema.dense_count) {
    throw SchemaError(fmt::format("dense block is {}, schema expects {}x{}",
                                  raw.dense.shape_string(), b, schema.dense_count));
  }
  std::vector<Block> tokens;
  if (schema.dense_count > 0) {
    tokens.push_back({matmul(g.constant(raw.dense), params("embed.dense")), 1});
  } else {
    tokens.push_back({g.constant(Tensor(b, d)), 1});
  }
  for (std::size_t f = 0; f < n; ++f) {
    const auto& spec = schema.sparse[f];
    std::vector<std::ptrdiff_t> idx(b);
    for (std::size_t i = 0; i < b; ++i) {
      idx[i] = raw.sparse[i * n + f];
      if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= spec.vocab) {
        throw IngestionError(fmt::format("sparse feature '{}' index {} outside vocabulary of {}",
                                         spec.name, idx[i], spec.vocab));
      }
    }
    tokens.push_back({gather_rows(params("embed.sparse." + spec.name), std::move(idx)), 1});
  }
  EmbeddedInputs out;
  out.x = concat_blocks(tokens, b);
  for (std::size_t s = 0; s < schema.sequences.size(); ++s) {
    const auto& spec = schema.sequences[s];
    for (auto v : raw.sequences[s]) {
      if (v < -1 || v >= static_cast<std::ptrdiff_t>(spec.vocab)) {
        throw IngestionError(fmt::format("sequence feature '{}' index {} outside vocabulary of {}",
                                         spec.name, v, spec.vocab));
      }
    }
    out.sequences.push_back(gather_rows(params("embed.seq." + spec.name), raw.sequences[s]));
  }
  return out;
}

void init_mask_net_params(ParamStore& store, Rng& rng, const std::string& prefix,
                          std::size_t sequence_count, std::size_t dim) {
  const std::size_t kd = sequence_count * dim;
  add_linear(store, rng, prefix + ".mask", kd, kd);
  add_linear(store, rng, prefix + ".lce", kd, dim);
}

Var mask_net(std::span<const Var> sequences, ParamBinding& params, const std::string& prefix) {
  if (sequences.empty()) throw DimensionError("mask_net needs at least one sequence");
  for (const Var& s : sequences) {
    if (s.rows() != sequences.front().rows()) {
      throw DimensionError(fmt::format("mask_net: sequences have {} and {} time steps", s.rows(),
                                       sequences.front().rows()));
    }
  }
  Var stacked = sequences.size() == 1 ? sequences.front() : concat_cols(sequences);
  Var mask = activation(linear(params, prefix + ".mask", stacked), Activation::kSigmoid);
  return linear(params, prefix + ".lce", hadamard(stacked, mask));
}

FeatureBatch preprocess(const FeatureSchema& schema, const RawBatch& raw, ParamBinding& params) {
  EmbeddedInputs e = embed_batch(schema, raw, params);
  FeatureBatch fb;
  fb.size = raw.size;
  fb.x = e.x;
  fb.s = mask_net(e.sequences, params, "masknet");
  fb.seq_len = raw.seq_len;
  fb.labels = raw.labels;
  fb.user_ids = raw.user_ids;
  return fb;
}

}  // namespace interformer
