#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "interformer/autograd.hpp"

namespace interformer {

enum class Backbone { kDot, kFm, kDcnV2, kDhen };

// Inter-mode information flow used by the ablation study.
enum class FlowMode {
  kSole,  // interaction arch only; the sequence is mean-pooled into one column
  kSep,   // both arches, nothing exchanged
  kN2S,   // non-sequence summaries feed the sequence arch
  kS2N,   // sequence summaries feed the interaction arch
  kInt,   // both directions
};

Backbone parse_backbone(std::string_view name);
std::string_view backbone_name(Backbone b);
FlowMode parse_mode(std::string_view name);
std::string_view mode_name(FlowMode m);
inline constexpr FlowMode kAllModes[] = {FlowMode::kSole, FlowMode::kSep, FlowMode::kN2S,
                                        FlowMode::kS2N, FlowMode::kInt};

struct ModelConfig {
  std::size_t layers = 2;
  std::size_t embedding_dim = 8;
  Backbone backbone = Backbone::kDhen;
  FlowMode mode = FlowMode::kInt;

  // Sequence arch.
  std::size_t heads = 2;
  std::size_t pffn_hidden = 16;

  // Cross arch token budget.
  std::size_t cls_tokens = 4;
  std::size_t pma_tokens = 2;
  std::size_t recent_tokens = 2;
  std::size_t summary_tokens = 4;  // n_sum
  Activation gate_activation = Activation::kIdentity;

  // Interaction arch.
  std::size_t interaction_hidden = 64;
  std::size_t fm_rank = 16;
  std::size_t dcn_layers = 2;
  std::size_t dcn_rank = 32;
  std::size_t dhen_layers = 1;

  // Classifier head: the {1024, 512, 256, 128} menu divided by head_scale.
  std::vector<std::size_t> head_sizes = {1024, 512, 256, 128};
  std::size_t head_scale = 16;

  Activation activation = Activation::kSwish;
  double norm_eps = 1e-5;

  std::size_t head_dim() const { return embedding_dim / heads; }
  std::size_t seq_summary_tokens() const { return cls_tokens + pma_tokens + recent_tokens; }
  std::vector<std::size_t> scaled_head_sizes() const;

  // Throws ConfigError on an inconsistent combination. `nonseq_tokens` is the
  // column count of the embedded non-sequence matrix (1 + sparse features).
  void validate(std::size_t nonseq_tokens) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Flat key = value representation, shared by checkpoints and run configs.
using KeyValues = std::map<std::string, std::string>;

KeyValues to_key_values(const ModelConfig& config);
// Consumes the model keys it recognizes from `kv` (erasing them) and applies
// them over `config`.
void apply_key_values(ModelConfig& config, KeyValues& kv);

std::string join_sizes(const std::vector<std::size_t>& sizes);
std::vector<std::size_t> parse_sizes(std::string_view text);
std::size_t parse_count(std::string_view key, std::string_view text);
double parse_real(std::string_view key, std::string_view text);

}  // namespace interformer
