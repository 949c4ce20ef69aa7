#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "interformer/autograd.hpp"
#include "interformer/config.hpp"
#include "interformer/params.hpp"
#include "interformer/sequence.hpp"

namespace interformer {

// Gating(Z) = σ(Z ⊙ MLP(Z)); the MLP is one linear layer "<prefix>" over each
// example's flattened M tokens. Token layout in and out.
void init_gating_params(ParamStore& store, Rng& rng, const std::string& prefix,
                        std::size_t tokens, std::size_t d);
Var self_gating(ParamBinding& params, const std::string& prefix, Var z, std::size_t batch,
                Activation sigma);

// Compresses N tokens to M by a learned N x M mixing: out_b = Wᵀ x_b.
// Throws ConfigError when M > N.
Var lce(Var x, Var mix, std::size_t batch);

// X_sum = Gating(LCE(X)) with "<prefix>.lce" (N x n_sum) and "<prefix>.gate".
void init_nonseq_summary_params(ParamStore& store, Rng& rng, const std::string& prefix,
                                std::size_t x_tokens, std::size_t summary_tokens, std::size_t d);
Var summarize_nonseq(ParamBinding& params, const std::string& prefix, Var x, std::size_t batch,
                     Activation sigma);

// S_sum = Gating([S_CLS ‖ S_PMA ‖ S_recent]). The sequence block of S is
// left-padded; S_recent holds the `recent` rightmost valid tokens, oldest
// first, with zero rows for missing ones.
void init_seq_summary_params(ParamStore& store, Rng& rng, const std::string& prefix,
                             const ModelConfig& config);
Var summarize_seq(ParamBinding& params, const std::string& prefix, const ModelConfig& config,
                  Var s, std::size_t cls_tokens, const std::vector<std::size_t>& seq_len,
                  std::size_t seq_tokens);

}  // namespace interformer
