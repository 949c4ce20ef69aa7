#pragma once

#include <cstddef>
#include <cstdint>

#include "interformer/config.hpp"
#include "interformer/features.hpp"
#include "interformer/params.hpp"

namespace interformer {

// A complete model: architecture, input schema and the learned tensors.
//
// Parameter naming:
//   embed.*, masknet.*           preprocessing
//   layer{l}.xsum.*, .ssum.*     cross arch summaries feeding layer l
//   layer{l}.inter.*, .seq.*     interaction / sequence arch of layer l
//   final.xsum.*, final.ssum.*   summaries of the last layer's output
//   head.*                       classifier MLP
// Every mode except `sole` creates the same tensors; flows that a mode cuts
// are replaced by zero summaries, so their summarizers receive no gradient.
struct Model {
  ModelConfig config;
  FeatureSchema schema;
  ParamStore params;
};

Model init_model(const ModelConfig& config, const FeatureSchema& schema, std::uint64_t seed);

// Closed-form parameter count for (config, schema).
std::size_t parameter_count(const ModelConfig& config, const FeatureSchema& schema);

// Throws AssemblyError naming the first tensor whose name or shape differs
// from what init_model would create for (config, schema).
void check_layout(const ModelConfig& config, const FeatureSchema& schema, const ParamStore& params);

struct ForwardOutput {
  Var logits;  // batch x 1
  Var probs;   // sigmoid(logits) clamped to [1e-7, 1 - 1e-7]
};

inline constexpr double kProbFloor = 1e-7;

ForwardOutput interformer_forward(const ModelConfig& config, const FeatureSchema& schema,
                                  const RawBatch& batch, ParamBinding& params);

// MLP over the flattened [X_sum ‖ S_sum] of each example, then sigmoid.
// `s_sum` is skipped when `s_tokens` is 0.
ForwardOutput predict_head(ParamBinding& params, const ModelConfig& config, Var x_sum,
                           std::size_t x_tokens, Var s_sum, std::size_t s_tokens,
                           std::size_t batch);

// Mean of each example's valid sequence rows (zero for an empty sequence).
Var mean_pool_sequence(Var s, const std::vector<std::size_t>& seq_len, std::size_t seq_tokens);

}  // namespace interformer
