#pragma once

#include <cstddef>
#include <string>

#include "interformer/autograd.hpp"
#include "interformer/config.hpp"
#include "interformer/params.hpp"

namespace interformer {

// All functions take examples as rows (B x D) or in token layout (B*N x d).
// A per-example d x N matrix is flattened token by token into one row.

// Second-order FM on each row of x (B x D) with latent factors v (D x r),
// linear weights w (D x 1) and intercept w0 (1 x 1). Returns B x 1.
Var fm_second_order(Var x, Var v, Var w, Var w0);

// Upper triangle (diagonal included) of each example's Gram matrix over its
// N tokens, row by row. Returns B x N(N+1)/2.
Var dot_interaction(Var tokens, std::size_t batch);

// x_{l+1} = x0 ⊙ (x_l W + b) + x_l on row vectors, W given as D x D or as the
// low-rank product U (D x r) V (r x D) when `v` is valid.
Var dcn_cross_layer(Var x0, Var xl, Var w_or_u, Var v, Var b);

// Rank used by the DCNv2 cross layers for a flattened width D.
std::size_t dcn_rank_for(const ModelConfig& config, std::size_t width);

// Width of the backbone output for N tokens of width d.
std::size_t backbone_output_width(const ModelConfig& config, std::size_t tokens, std::size_t d);

void init_dcn_params(ParamStore& store, Rng& rng, const std::string& prefix,
                     const ModelConfig& config, std::size_t width);
// Stack of config.dcn_layers cross layers over the rows of x0.
Var dcn_stack(ParamBinding& params, const std::string& prefix, Var x0, std::size_t layers);

// One DHEN layer: concatenated DOT and DCN module outputs, linear projector
// back to N*d, plus a linear shortcut of the input, then per-token layer norm.
// Token layout in and out.
void init_dhen_layer_params(ParamStore& store, Rng& rng, const std::string& prefix,
                            const ModelConfig& config, std::size_t tokens, std::size_t d);
Var dhen_layer(ParamBinding& params, const std::string& prefix, const ModelConfig& config,
               Var tokens, std::size_t batch);

void init_backbone_params(ParamStore& store, Rng& rng, const std::string& prefix,
                          const ModelConfig& config, std::size_t tokens, std::size_t d);
// Backbone over token layout input, flattened per example: B x backbone_output_width.
Var backbone_forward(ParamBinding& params, const std::string& prefix, const ModelConfig& config,
                     Var tokens, std::size_t batch);

// Interaction arch layer: backbone over [X ‖ S_sum], then an MLP reshaped
// back to the N tokens of X. `summary_tokens` may be 0, in which case
// `s_sum` is ignored.
void init_interaction_layer_params(ParamStore& store, Rng& rng, const std::string& prefix,
                                   const ModelConfig& config, std::size_t x_tokens,
                                   std::size_t summary_tokens, std::size_t d);
Var interaction_arch_layer(ParamBinding& params, const std::string& prefix,
                           const ModelConfig& config, Var x, std::size_t x_tokens, Var s_sum,
                           std::size_t summary_tokens, std::size_t batch);

}  // namespace interformer
