#include "interformer/cross.hpp"

#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

void init_gating_params(ParamStore& store, Rng& rng, const std::string& prefix,
                        std::size_t tokens, std::size_t d) {
  const std::size_t width = tokens * d;
  store.add(prefix + ".W", glorot_tensor(rng, width, width));
  // Starts close to a pass-through gate.
  store.add(prefix + ".b", Tensor::ones(1, width));
}

Var self_gating(ParamBinding& params, const std::string& prefix, Var z, std::size_t batch,
                Activation sigma) {
  if (batch == 0 || z.rows() % batch != 0) {
    throw DimensionError(fmt::format("self_gating: {} rows is not {} examples", z.rows(), batch));
  }
  Var flat = reshape(z, batch, z.rows() / batch * z.cols());
  Var gated = activation(hadamard(flat, linear(params, prefix, flat)), sigma);
  return reshape(gated, z.rows(), z.cols());
}

Var lce(Var x, Var mix, std::size_t batch) {
  if (mix.cols() > mix.rows()) {
    throw ConfigError(fmt::format("LCE must compress: {} tokens cannot map to {}", mix.rows(),
                                  mix.cols()));
  }
  return mix_blocks(x, mix, batch);
}

void init_nonseq_summary_params(ParamStore& store, Rng& rng, const std::string& prefix,
                                std::size_t x_tokens, std::size_t summary_tokens, std::size_t d) {
  if (summary_tokens == 0 || summary_tokens >= x_tokens) {
    throw ConfigError(fmt::format("summary_tokens={} must be in [1, {})", summary_tokens,
                                  x_tokens));
  }
  store.add(prefix + ".lce", glorot_tensor(rng, x_tokens, summary_tokens));
  init_gating_params(store, rng, prefix + ".gate", summary_tokens, d);
}

Var summarize_nonseq(ParamBinding& params, const std::string& prefix, Var x, std::size_t batch,
                     Activation sigma) {
  Var mix = params(prefix + ".lce");
  if (mix.cols() >= mix.rows()) {
    throw ConfigError(fmt::format("summary_tokens={} must be below the {} input tokens",
                                  mix.cols(), mix.rows()));
  }
  return self_gating(params, prefix + ".gate", lce(x, mix, batch), batch, sigma);
}

void init_seq_summary_params(ParamStore& store, Rng& rng, const std::string& prefix,
                             const ModelConfig& config) {
  const std::size_t d = config.embedding_dim;
  if (config.pma_tokens > 0) {
    init_pma_params(store, rng, prefix + ".pma", d, config.heads, config.pma_tokens);
  }
  init_gating_params(store, rng, prefix + ".gate", config.seq_summary_tokens(), d);
}

Var summarize_seq(ParamBinding& params, const std::string& prefix, const ModelConfig& config,
                  Var s, std::size_t cls_tokens, const std::vector<std::size_t>& seq_len,
                  std::size_t seq_tokens) {
  const std::size_t batch = seq_len.size(), tokens = cls_tokens + seq_tokens;
  if (batch == 0 || s.rows() != batch * tokens) {
    throw DimensionError(fmt::format("summarize_seq: S {} is not {} examples of {} tokens",
                                     s.value().shape_string(), batch, tokens));
  }
  const std::size_t total = cls_tokens + config.pma_tokens + config.recent_tokens;
  if (total == 0) throw ConfigError("sequence summary has no tokens");
  std::vector<Block> parts;
  if (cls_tokens > 0) {
    std::vector<std::ptrdiff_t> idx;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < cls_tokens; ++t) idx.push_back(b * tokens + t);
    parts.push_back({gather_rows(s, std::move(idx)), cls_tokens});
  }
  if (config.pma_tokens > 0) {
    const KeyMask mask = KeyMask::for_sequence(seq_len, cls_tokens, seq_tokens);
    parts.push_back({pma(params, prefix + ".pma", s, config.heads, mask), config.pma_tokens});
  }
  if (config.recent_tokens > 0) {
    const std::size_t k = config.recent_tokens;
    std::vector<std::ptrdiff_t> idx;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t len = std::min(seq_len[b], seq_tokens);
      for (std::size_t j = 0; j < k; ++j) {
        // Slot j of the recent block, counted so the newest lands last.
        const std::size_t age = k - 1 - j;
        idx.push_back(age < len ? static_cast<std::ptrdiff_t>(b * tokens + tokens - 1 - age) : -1);
      }
    }
    parts.push_back({gather_rows(s, std::move(idx)), k});
  }
  Var joined = parts.size() == 1 ? parts.front().var : concat_blocks(parts, batch);
  return self_gating(params, prefix + ".gate", joined, batch, config.gate_activation);
}

}  // namespace interformer
