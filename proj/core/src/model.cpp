#include "interformer/model.hpp"

#include <fmt/format.h>

#include "interformer/cross.hpp"
#include "interformer/errors.hpp"
#include "interformer/interaction.hpp"
#include "interformer/sequence.hpp"

namespace interformer {

namespace {

std::string layer_prefix(std::size_t l, const char* part) { return fmt::format("layer{}.{}", l, part); }

std::vector<std::size_t> head_layers(const ModelConfig& config, std::size_t input) {
  std::vector<std::size_t> sizes = {input};
  for (std::size_t s : config.scaled_head_sizes()) sizes.push_back(s);
  sizes.push_back(1);
  return sizes;
}

bool flows_n2s(FlowMode m) { return m == FlowMode::kN2S || m == FlowMode::kInt; }
bool flows_s2n(FlowMode m) { return m == FlowMode::kS2N || m == FlowMode::kInt; }

}  // namespace

Model init_model(const ModelConfig& config, const FeatureSchema& schema, std::uint64_t seed) {
  schema.validate();
  if (schema.embedding_dim != config.embedding_dim) {
    throw ConfigError(fmt::format("schema embedding_dim {} differs from model embedding_dim {}",
                                  schema.embedding_dim, config.embedding_dim));
  }
  const std::size_t n = schema.nonseq_tokens(), d = config.embedding_dim;
  config.validate(n);
  Model model{config, schema, {}};
  ParamStore& store = model.params;
  Rng rng(seed);
  init_feature_params(store, rng, schema);
  init_mask_net_params(store, rng, "masknet", schema.sequences.size(), d);

  if (config.mode == FlowMode::kSole) {
    for (std::size_t l = 0; l < config.layers; ++l)
      init_interaction_layer_params(store, rng, layer_prefix(l, "inter"), config, n + 1, 0, d);
    init_nonseq_summary_params(store, rng, "final.xsum", n + 1, config.summary_tokens, d);
    add_mlp(store, rng, "head", head_layers(config, config.summary_tokens * d));
    return model;
  }

  const std::size_t s_tokens = config.seq_summary_tokens();
  for (std::size_t l = 0; l < config.layers; ++l) {
    init_nonseq_summary_params(store, rng, layer_prefix(l, "xsum"), n, config.summary_tokens, d);
    init_seq_summary_params(store, rng, layer_prefix(l, "ssum"), config);
    init_interaction_layer_params(store, rng, layer_prefix(l, "inter"), config, n, s_tokens, d);
    init_sequence_layer_params(store, rng, layer_prefix(l, "seq"), config, config.summary_tokens);
  }
  init_nonseq_summary_params(store, rng, "final.xsum", n, config.summary_tokens, d);
  init_seq_summary_params(store, rng, "final.ssum", config);
  add_mlp(store, rng, "head", head_layers(config, (config.summary_tokens + s_tokens) * d));
  return model;
}

std::size_t parameter_count(const ModelConfig& c, const FeatureSchema& schema) {
  const std::size_t d = c.embedding_dim, n = schema.nonseq_tokens();
  const std::size_t k = schema.sequences.size();
  auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  auto gating = [&](std::size_t tokens) { return linear(tokens * d, tokens * d); };
  auto xsum = [&](std::size_t tokens) { return tokens * c.summary_tokens + gating(c.summary_tokens); };
  auto dcn = [&](std::size_t width) {
    const std::size_t r = width >= c.dcn_rank ? c.dcn_rank : width;
    return c.dcn_layers * ((r < width ? 2 * width * r : width * width) + width);
  };
  auto inter = [&](std::size_t x_tokens, std::size_t s_tokens) {
    const std::size_t t = x_tokens + s_tokens, w = t * d, tri = t * (t + 1) / 2;
    std::size_t backbone = 0, out = w;
    switch (c.backbone) {
      case Backbone::kDot: out = tri + w; break;
      case Backbone::kFm: backbone = w * c.fm_rank + w + 1; out = w + 1; break;
      case Backbone::kDcnV2: backbone = dcn(w); break;
      case Backbone::kDhen:
        backbone = c.dhen_layers * (dcn(w) + linear(tri + w, w) + linear(w, w) + 2 * d);
        break;
    }
    return backbone + linear(out, c.interaction_hidden) + linear(c.interaction_hidden, x_tokens * d);
  };
  auto head = [&](std::size_t input) {
    std::size_t total = 0, prev = input;
    for (std::size_t s : c.scaled_head_sizes()) {
      total += linear(prev, s);
      prev = s;
    }
    return total + linear(prev, 1);
  };

  std::size_t total = schema.dense_count * d;
  for (const auto& s : schema.sparse) total += s.vocab * d;
  for (const auto& s : schema.sequences) total += s.vocab * d;
  total += linear(k * d, k * d) + linear(k * d, d);

  if (c.mode == FlowMode::kSole) {
    return total + c.layers * inter(n + 1, 0) + xsum(n + 1) + head(c.summary_tokens * d);
  }
  const std::size_t s_tokens = c.seq_summary_tokens();
  const std::size_t mha = 4 * d * d;
  const std::size_t ssum = (c.pma_tokens > 0 ? c.pma_tokens * d + mha : 0) + gating(s_tokens);
  const std::size_t pffn = linear(c.summary_tokens * d, c.pffn_hidden) + linear(c.pffn_hidden, d * d);
  const std::size_t seq = pffn + 2 * d + mha;
  total += c.layers * (xsum(n) + ssum + inter(n, s_tokens) + seq);
  return total + xsum(n) + ssum + head((c.summary_tokens + s_tokens) * d);
}

void check_layout(const ModelConfig& config, const FeatureSchema& schema,
                  const ParamStore& params) {
  const Model expected = init_model(config, schema, 0);
  const auto& want = expected.params.entries();
  const auto& got = params.entries();
  for (std::size_t i = 0; i < std::max(want.size(), got.size()); ++i) {
    if (i >= got.size()) {
      throw AssemblyError(fmt::format("missing tensor '{}' ({}x{})", want[i].first,
                                      want[i].second.rows(), want[i].second.cols()));
    }
    if (i >= want.size()) {
      throw AssemblyError(fmt::format("unexpected tensor '{}'", got[i].first));
    }
    if (want[i].first != got[i].first || !want[i].second.same_shape(got[i].second)) {
      throw AssemblyError(fmt::format("tensor #{} is '{}' {}, model expects '{}' {}", i,
                                      got[i].first, got[i].second.shape_string(), want[i].first,
                                      want[i].second.shape_string()));
    }
  }
}

Var mean_pool_sequence(Var s, const std::vector<std::size_t>& seq_len, std::size_t seq_tokens) {
  const std::size_t batch = seq_len.size();
  Tensor weights(batch, seq_tokens);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t len = std::min(seq_len[b], seq_tokens);
    for (std::size_t t = seq_tokens - len; t < seq_tokens; ++t)
      weights(b, t) = 1.0 / static_cast<double>(len);
  }
  return batched_matmul(s.graph().constant(std::move(weights)), s, batch, false);
}

ForwardOutput predict_head(ParamBinding& params, const ModelConfig& config, Var x_sum,
                           std::size_t x_tokens, Var s_sum, std::size_t s_tokens,
                           std::size_t batch) {
  Var input = x_sum;
  if (s_tokens > 0) {
    Block parts[] = {{x_sum, x_tokens}, {s_sum, s_tokens}};
    input = concat_blocks(parts, batch);
  }
  const std::size_t width = input.rows() / batch * input.cols();
  const std::size_t layers = config.scaled_head_sizes().size() + 1;
  Var logits = mlp(params, "head", reshape(input, batch, width), layers, config.activation);
  Var probs = clamp(activation(logits, Activation::kSigmoid), kProbFloor, 1.0 - kProbFloor);
  return {logits, probs};
}

ForwardOutput interformer_forward(const ModelConfig& config, const FeatureSchema& schema,
                                  const RawBatch& raw, ParamBinding& params) {
  if (raw.size == 0) throw DataError("empty batch");
  Graph& g = params.graph();
  const std::size_t batch = raw.size, d = config.embedding_dim;
  const std::size_t n = schema.nonseq_tokens(), T = schema.sequence_length();
  if (schema.embedding_dim != d) {
    throw AssemblyError(fmt::format("schema embedding_dim {} differs from model embedding_dim {}",
                                    schema.embedding_dim, d));
  }
  const FeatureBatch fb = preprocess(schema, raw, params);

  if (config.mode == FlowMode::kSole) {
    Block parts[] = {{fb.x, n}, {mean_pool_sequence(fb.s, fb.seq_len, T), 1}};
    Var x = concat_blocks(parts, batch);
    for (std::size_t l = 0; l < config.layers; ++l)
      x = interaction_arch_layer(params, layer_prefix(l, "inter"), config, x, n + 1, Var{}, 0,
                                 batch);
    Var x_sum = summarize_nonseq(params, "final.xsum", x, batch, config.gate_activation);
    return predict_head(params, config, x_sum, config.summary_tokens, Var{}, 0, batch);
  }

  const bool n2s = flows_n2s(config.mode), s2n = flows_s2n(config.mode);
  const std::size_t n_sum = config.summary_tokens, c = config.cls_tokens;
  const std::size_t s_tokens = config.seq_summary_tokens();
  Var zero_xsum = g.constant(Tensor(batch * n_sum, d));
  Var zero_ssum = g.constant(Tensor(batch * s_tokens, d));

  Var x = fb.x;
  Var x_sum = n2s ? summarize_nonseq(params, layer_prefix(0, "xsum"), x, batch,
                                     config.gate_activation)
                  : zero_xsum;
  Var s = prepend_cls(x_sum, c, fb.s, T, batch);
  const KeyMask mask = KeyMask::for_sequence(fb.seq_len, c, T);

  for (std::size_t l = 0; l < config.layers; ++l) {
    if (l > 0) {
      x_sum = n2s ? summarize_nonseq(params, layer_prefix(l, "xsum"), x, batch,
                                     config.gate_activation)
                  : zero_xsum;
    }
    Var s_sum = s2n ? summarize_seq(params, layer_prefix(l, "ssum"), config, s, c, fb.seq_len, T)
                    : zero_ssum;
    Var x_next = interaction_arch_layer(params, layer_prefix(l, "inter"), config, x, n, s_sum,
                                        s_tokens, batch);
    s = sequence_arch_layer(params, layer_prefix(l, "seq"), config, s, x_sum, n_sum, mask);
    x = x_next;
  }
  Var final_x = summarize_nonseq(params, "final.xsum", x, batch, config.gate_activation);
  Var final_s = summarize_seq(params, "final.ssum", config, s, c, fb.seq_len, T);
  return predict_head(params, config, final_x, n_sum, final_s, s_tokens, batch);
}

}  // namespace interformer
