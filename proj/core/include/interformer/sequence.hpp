#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "interformer/autograd.hpp"
#include "interformer/config.hpp"
#include "interformer/params.hpp"

namespace interformer {

// Per-example key validity in token layout: batch blocks of `tokens` bytes.
struct KeyMask {
  std::size_t batch = 0;
  std::size_t tokens = 0;
  std::vector<std::uint8_t> valid;

  // CLS tokens first (always valid), then a left-padded sequence block of
  // `length` slots where only the last seq_len[b] are valid.
  static KeyMask for_sequence(const std::vector<std::size_t>& seq_len, std::size_t cls_tokens,
                              std::size_t length);
  static KeyMask all_valid(std::size_t batch, std::size_t tokens);

  // Element mask for a (batch * queries) x tokens score matrix.
  std::vector<std::uint8_t> expand(std::size_t queries) const;
};

// softmax(Q Kᵀ / √d_k) V per example, with masked keys given zero weight.
// Q: batch*Tq x d_k, K: batch*Tk x d_k, V: batch*Tk x d_v.
Var scaled_dot_attention(Var q, Var k, Var v, const KeyMask& mask);

// Rope positions for query or key rows; empty disables rope.
struct Positions {
  std::vector<double> query;
  std::vector<double> key;
};

// Multi-head attention with "<prefix>.Wq/.Wk/.Wv" (d x h·d_k) and "<prefix>.Wo"
// (h·d_k x d). Head i uses columns [i·d_k, (i+1)·d_k) of the projections.
void init_attention_params(ParamStore& store, Rng& rng, const std::string& prefix,
                           std::size_t d, std::size_t heads);
Var multi_head_attention(ParamBinding& params, const std::string& prefix, Var queries,
                         Var keys_values, std::size_t heads, const KeyMask& mask,
                         const Positions& positions = {});

// Pooling by multi-head attention: learnable seeds "<prefix>.seeds"
// (k_pma x d) attend over `tokens`. Returns batch*k_pma x d.
void init_pma_params(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t d,
                     std::size_t heads, std::size_t seeds);
Var pma(ParamBinding& params, const std::string& prefix, Var tokens, std::size_t heads,
        const KeyMask& mask);

// PFFN: an MLP on the flattened X_sum emits a per-example d x d transform F
// (initialized to the identity); each token row s becomes (F s)ᵀ.
void init_pffn_params(ParamStore& store, Rng& rng, const std::string& prefix,
                      std::size_t summary_tokens, std::size_t d, std::size_t hidden);
Var pffn(ParamBinding& params, const std::string& prefix, Var x_sum, std::size_t summary_tokens,
         Var s, std::size_t batch, Activation act);

Var prepend_cls(Var cls, std::size_t cls_tokens, Var s, std::size_t seq_tokens,
                std::size_t batch);

// CLS tokens sit at positions 0..c-1 and sequence slot t at c+t.
std::vector<double> sequence_positions(std::size_t batch, std::size_t tokens);

// S_{l+1} = U + MHA(LN(U)) with U = PFFN(X_sum, S_l); rope on queries and keys.
void init_sequence_layer_params(ParamStore& store, Rng& rng, const std::string& prefix,
                                const ModelConfig& config, std::size_t summary_tokens);
Var sequence_arch_layer(ParamBinding& params, const std::string& prefix,
                        const ModelConfig& config, Var s, Var x_sum, std::size_t summary_tokens,
                        const KeyMask& mask);

}  // namespace interformer
