#include "interformer/sequence.hpp"

#include <cmath>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

KeyMask KeyMask::for_sequence(const std::vector<std::size_t>& seq_len, std::size_t cls_tokens,
                              std::size_t length) {
  KeyMask m;
  m.batch = seq_len.size();
  m.tokens = cls_tokens + length;
  m.valid.assign(m.batch * m.tokens, 0);
  for (std::size_t b = 0; b < m.batch; ++b) {
    const std::size_t len = std::min(seq_len[b], length);
    std::uint8_t* row = m.valid.data() + b * m.tokens;
    for (std::size_t t = 0; t < cls_tokens; ++t) row[t] = 1;
    for (std::size_t t = length - len; t < length; ++t) row[cls_tokens + t] = 1;
  }
  return m;
}

KeyMask KeyMask::all_valid(std::size_t batch, std::size_t tokens) {
  return {batch, tokens, std::vector<std::uint8_t>(batch * tokens, 1)};
}

std::vector<std::uint8_t> KeyMask::expand(std::size_t queries) const {
  std::vector<std::uint8_t> out(batch * queries * tokens);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t q = 0; q < queries; ++q)
      std::copy_n(valid.data() + b * tokens, tokens, out.data() + (b * queries + q) * tokens);
  return out;
}

Var scaled_dot_attention(Var q, Var k, Var v, const KeyMask& mask) {
  if (mask.batch == 0 || k.rows() != mask.batch * mask.tokens || v.rows() != k.rows() ||
      q.rows() % mask.batch != 0 || q.cols() != k.cols()) {
    throw DimensionError(fmt::format("attention: Q {}, K {}, V {} for {} examples of {} keys",
                                     q.value().shape_string(), k.value().shape_string(),
                                     v.value().shape_string(), mask.batch, mask.tokens));
  }
  const std::size_t queries = q.rows() / mask.batch;
  Var scores = scale(batched_matmul(q, k, mask.batch, true),
                     1.0 / std::sqrt(static_cast<double>(q.cols())));
  Var weights = masked_softmax_rows(scores, mask.expand(queries));
  return batched_matmul(weights, v, mask.batch, false);
}

void init_attention_params(ParamStore& store, Rng& rng, const std::string& prefix,
                           std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError(fmt::format("{} heads do not divide width {}", heads, d));
  }
  store.add(prefix + ".Wq", glorot_tensor(rng, d, d));
  store.add(prefix + ".Wk", glorot_tensor(rng, d, d));
  store.add(prefix + ".Wv", glorot_tensor(rng, d, d));
  store.add(prefix + ".Wo", glorot_tensor(rng, d, d));
}

Var multi_head_attention(ParamBinding& params, const std::string& prefix, Var queries,
                         Var keys_values, std::size_t heads, const KeyMask& mask,
                         const Positions& positions) {
  const std::size_t d = queries.cols();
  if (heads == 0 || d % heads != 0) {
    throw ConfigError(fmt::format("{} heads do not divide width {}", heads, d));
  }
  const std::size_t dk = d / heads;
  Var q = matmul(queries, params(prefix + ".Wq"));
  Var k = matmul(keys_values, params(prefix + ".Wk"));
  Var v = matmul(keys_values, params(prefix + ".Wv"));
  if (!positions.query.empty()) q = rope(q, positions.query, dk);
  if (!positions.key.empty()) k = rope(k, positions.key, dk);
  Var out;
  if (heads == 1) {
    out = scaled_dot_attention(q, k, v, mask);
  } else {
    std::vector<Var> per_head;
    per_head.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
      per_head.push_back(scaled_dot_attention(slice_cols(q, h * dk, dk), slice_cols(k, h * dk, dk),
                                              slice_cols(v, h * dk, dk), mask));
    }
    out = concat_cols(per_head);
  }
  return matmul(out, params(prefix + ".Wo"));
}

void init_pma_params(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t d,
                     std::size_t heads, std::size_t seeds) {
  if (seeds == 0) throw ConfigError("PMA needs at least one seed");
  store.add(prefix + ".seeds", uniform_tensor(rng, seeds, d, 1.0 / std::sqrt(double(d))));
  init_attention_params(store, rng, prefix + ".mha", d, heads);
}

Var pma(ParamBinding& params, const std::string& prefix, Var tokens, std::size_t heads,
        const KeyMask& mask) {
  Var seeds = params(prefix + ".seeds");
  const std::size_t k = seeds.rows();
  std::vector<std::ptrdiff_t> tile(mask.batch * k);
  for (std::size_t i = 0; i < tile.size(); ++i) tile[i] = static_cast<std::ptrdiff_t>(i % k);
  return multi_head_attention(params, prefix + ".mha", gather_rows(seeds, std::move(tile)), tokens,
                              heads, mask);
}

void init_pffn_params(ParamStore& store, Rng& rng, const std::string& prefix,
                      std::size_t summary_tokens, std::size_t d, std::size_t hidden) {
  add_linear(store, rng, prefix + ".f.0", summary_tokens * d, hidden);
  store.add(prefix + ".f.1.W", Tensor(hidden, d * d));
  store.add(prefix + ".f.1.b", Tensor(1, d * d));
}

Var pffn(ParamBinding& params, const std::string& prefix, Var x_sum, std::size_t summary_tokens,
         Var s, std::size_t batch, Activation act) {
  const std::size_t d = s.cols();
  if (x_sum.rows() != batch * summary_tokens || x_sum.cols() != d || s.rows() % batch != 0) {
    throw DimensionError(fmt::format("pffn: X_sum {} and S {} for {} examples",
                                     x_sum.value().shape_string(), s.value().shape_string(),
                                     batch));
  }
  Var h = activation(linear(params, prefix + ".f.0", reshape(x_sum, batch, summary_tokens * d)),
                     act);
  Tensor eye = Tensor::identity(d).reshaped(1, d * d);
  Var f = add_row_broadcast(linear(params, prefix + ".f.1", h), s.graph().constant(std::move(eye)));
  return batched_matmul(s, reshape(f, batch * d, d), batch, true);
}

Var prepend_cls(Var cls, std::size_t cls_tokens, Var s, std::size_t seq_tokens,
                std::size_t batch) {
  if (cls_tokens == 0) return s;
  if (cls.cols() != s.cols()) {
    throw DimensionError(fmt::format("prepend_cls: CLS width {} vs sequence width {}", cls.cols(),
                                     s.cols()));
  }
  Block parts[] = {{cls, cls_tokens}, {s, seq_tokens}};
  return concat_blocks(parts, batch);
}

std::vector<double> sequence_positions(std::size_t batch, std::size_t tokens) {
  std::vector<double> pos(batch * tokens);
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = static_cast<double>(i % tokens);
  return pos;
}

void init_sequence_layer_params(ParamStore& store, Rng& rng, const std::string& prefix,
                                const ModelConfig& config, std::size_t summary_tokens) {
  const std::size_t d = config.embedding_dim;
  init_pffn_params(store, rng, prefix + ".pffn", summary_tokens, d, config.pffn_hidden);
  store.add(prefix + ".ln.gamma", Tensor::ones(1, d));
  store.add(prefix + ".ln.beta", Tensor(1, d));
  init_attention_params(store, rng, prefix + ".mha", d, config.heads);
}

Var sequence_arch_layer(ParamBinding& params, const std::string& prefix,
                        const ModelConfig& config, Var s, Var x_sum, std::size_t summary_tokens,
                        const KeyMask& mask) {
  if (s.rows() != mask.batch * mask.tokens) {
    throw DimensionError(fmt::format("sequence layer: S {} for {} examples of {} tokens",
                                     s.value().shape_string(), mask.batch, mask.tokens));
  }
  Var u = pffn(params, prefix + ".pffn", x_sum, summary_tokens, s, mask.batch, config.activation);
  Var normed = layer_norm(u, params(prefix + ".ln.gamma"), params(prefix + ".ln.beta"),
                          config.norm_eps);
  const auto pos = sequence_positions(mask.batch, mask.tokens);
  Var attended =
      multi_head_attention(params, prefix + ".mha", normed, normed, config.heads, mask, {pos, pos});
  return add(u, attended);
}

}  // namespace interformer
