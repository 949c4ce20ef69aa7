#include "interformer/interaction.hpp"

#include <cmath>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

Var fm_second_order(Var x, Var v, Var w, Var w0) {
  if (v.rows() != x.cols() || w.rows() != x.cols() || w.cols() != 1 || w0.rows() != 1 ||
      w0.cols() != 1) {
    throw DimensionError(fmt::format("fm_second_order: x {}, v {}, w {}, w0 {}",
                                     x.value().shape_string(), v.value().shape_string(),
                                     w.value().shape_string(), w0.value().shape_string()));
  }
  Var xv = matmul(x, v);
  Var sq = matmul(hadamard(x, x), hadamard(v, v));
  Var pairs = scale(row_sum(sub(hadamard(xv, xv), sq)), 0.5);
  return add_row_broadcast(add(pairs, matmul(x, w)), w0);
}

Var dot_interaction(Var tokens, std::size_t batch) {
  if (batch == 0 || tokens.rows() % batch != 0) {
    throw DimensionError(fmt::format("dot_interaction: {} rows is not {} examples",
                                     tokens.rows(), batch));
  }
  const std::size_t n = tokens.rows() / batch;
  Var gram = reshape(batched_matmul(tokens, tokens, batch, true), batch, n * n);
  Tensor select(n * n, n * (n + 1) / 2);
  std::size_t col = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) select(i * n + j, col++) = 1.0;
  return matmul(gram, tokens.graph().constant(std::move(select)));
}

Var dcn_cross_layer(Var x0, Var xl, Var w_or_u, Var v, Var b) {
  if (!x0.value().same_shape(xl.value())) {
    throw DimensionError(fmt::format("dcn_cross_layer: x0 {} vs xl {}", x0.value().shape_string(),
                                     xl.value().shape_string()));
  }
  Var proj = matmul(xl, w_or_u);
  if (v.valid()) proj = matmul(proj, v);
  return add(hadamard(x0, add_row_broadcast(proj, b)), xl);
}

std::size_t dcn_rank_for(const ModelConfig& config, std::size_t width) {
  return width >= config.dcn_rank ? config.dcn_rank : width;
}

namespace {

std::size_t triangle(std::size_t n) { return n * (n + 1) / 2; }

}  // namespace

std::size_t backbone_output_width(const ModelConfig& config, std::size_t tokens, std::size_t d) {
  const std::size_t width = tokens * d;
  switch (config.backbone) {
    case Backbone::kDot: return triangle(tokens) + width;
    case Backbone::kFm: return width + 1;
    case Backbone::kDcnV2:
    case Backbone::kDhen: return width;
  }
  return width;
}

void init_dcn_params(ParamStore& store, Rng& rng, const std::string& prefix,
                     const ModelConfig& config, std::size_t width) {
  const std::size_t r = dcn_rank_for(config, width);
  for (std::size_t l = 0; l < config.dcn_layers; ++l) {
    const std::string p = fmt::format("{}.{}", prefix, l);
    if (r < width) {
      store.add(p + ".U", glorot_tensor(rng, width, r));
      store.add(p + ".V", glorot_tensor(rng, r, width));
    } else {
      store.add(p + ".W", glorot_tensor(rng, width, width));
    }
    store.add(p + ".b", Tensor(1, width));
  }
}

Var dcn_stack(ParamBinding& params, const std::string& prefix, Var x0, std::size_t layers) {
  Var x = x0;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = fmt::format("{}.{}", prefix, l);
    if (params.has(p + ".U")) {
      x = dcn_cross_layer(x0, x, params(p + ".U"), params(p + ".V"), params(p + ".b"));
    } else {
      x = dcn_cross_layer(x0, x, params(p + ".W"), Var{}, params(p + ".b"));
    }
  }
  return x;
}

void init_dhen_layer_params(ParamStore& store, Rng& rng, const std::string& prefix,
                            const ModelConfig& config, std::size_t tokens, std::size_t d) {
  const std::size_t width = tokens * d;
  init_dcn_params(store, rng, prefix + ".dcn", config, width);
  add_linear(store, rng, prefix + ".proj", triangle(tokens) + width, width);
  add_linear(store, rng, prefix + ".short", width, width);
  store.add(prefix + ".ln.gamma", Tensor::ones(1, d));
  store.add(prefix + ".ln.beta", Tensor(1, d));
}

Var dhen_layer(ParamBinding& params, const std::string& prefix, const ModelConfig& config,
               Var tokens, std::size_t batch) {
  const std::size_t rows = tokens.rows(), d = tokens.cols();
  const std::size_t width = rows / batch * d;
  Var flat = reshape(tokens, batch, width);
  Var modules[] = {dot_interaction(tokens, batch),
                   dcn_stack(params, prefix + ".dcn", flat, config.dcn_layers)};
  Var ensemble = linear(params, prefix + ".proj", concat_cols(modules));
  Var mixed = add(ensemble, linear(params, prefix + ".short", flat));
  return layer_norm(reshape(mixed, rows, d), params(prefix + ".ln.gamma"),
                    params(prefix + ".ln.beta"), config.norm_eps);
}

void init_backbone_params(ParamStore& store, Rng& rng, const std::string& prefix,
                          const ModelConfig& config, std::size_t tokens, std::size_t d) {
  const std::size_t width = tokens * d;
  switch (config.backbone) {
    case Backbone::kDot: break;
    case Backbone::kFm:
      store.add(prefix + ".fm.V",
                uniform_tensor(rng, width, config.fm_rank, 1.0 / std::sqrt(double(width))));
      store.add(prefix + ".fm.w", Tensor(width, 1));
      store.add(prefix + ".fm.w0", Tensor(1, 1));
      break;
    case Backbone::kDcnV2: init_dcn_params(store, rng, prefix + ".dcn", config, width); break;
    case Backbone::kDhen:
      if (config.dhen_layers < 1) throw ConfigError("DHEN needs at least one layer");
      for (std::size_t l = 0; l < config.dhen_layers; ++l)
        init_dhen_layer_params(store, rng, fmt::format("{}.dhen.{}", prefix, l), config, tokens,
                               d);
      break;
  }
}

Var backbone_forward(ParamBinding& params, const std::string& prefix, const ModelConfig& config,
                     Var tokens, std::size_t batch) {
  const std::size_t rows = tokens.rows(), d = tokens.cols();
  if (batch == 0 || rows % batch != 0) {
    throw DimensionError(fmt::format("backbone: {} rows is not {} examples", rows, batch));
  }
  const std::size_t width = rows / batch * d;
  switch (config.backbone) {
    case Backbone::kDot: {
      Var parts[] = {dot_interaction(tokens, batch), reshape(tokens, batch, width)};
      return concat_cols(parts);
    }
    case Backbone::kFm: {
      Var flat = reshape(tokens, batch, width);
      Var parts[] = {flat, fm_second_order(flat, params(prefix + ".fm.V"),
                                           params(prefix + ".fm.w"), params(prefix + ".fm.w0"))};
      return concat_cols(parts);
    }
    case Backbone::kDcnV2:
      return dcn_stack(params, prefix + ".dcn", reshape(tokens, batch, width), config.dcn_layers);
    case Backbone::kDhen: {
      Var x = tokens;
      for (std::size_t l = 0; l < config.dhen_layers; ++l)
        x = dhen_layer(params, fmt::format("{}.dhen.{}", prefix, l), config, x, batch);
      return reshape(x, batch, width);
    }
  }
  throw ConfigError("unknown backbone");
}

void init_interaction_layer_params(ParamStore& store, Rng& rng, const std::string& prefix,
                                   const ModelConfig& config, std::size_t x_tokens,
                                   std::size_t summary_tokens, std::size_t d) {
  const std::size_t tokens = x_tokens + summary_tokens;
  init_backbone_params(store, rng, prefix, config, tokens, d);
  add_mlp(store, rng, prefix + ".mlp",
          {backbone_output_width(config, tokens, d), config.interaction_hidden, x_tokens * d});
}

Var interaction_arch_layer(ParamBinding& params, const std::string& prefix,
                           const ModelConfig& config, Var x, std::size_t x_tokens, Var s_sum,
                           std::size_t summary_tokens, std::size_t batch) {
  if (x.rows() != batch * x_tokens) {
    throw DimensionError(fmt::format("interaction layer: X has {} rows, expected {} x {}",
                                     x.rows(), batch, x_tokens));
  }
  Var input = x;
  if (summary_tokens > 0) {
    if (s_sum.cols() != x.cols()) {
      throw DimensionError(fmt::format("interaction layer: X width {} vs S_sum width {}", x.cols(),
                                       s_sum.cols()));
    }
    Block parts[] = {{x, x_tokens}, {s_sum, summary_tokens}};
    input = concat_blocks(parts, batch);
  }
  Var features = backbone_forward(params, prefix, config, input, batch);
  Var out = mlp(params, prefix + ".mlp", features, 2, config.activation);
  return reshape(out, batch * x_tokens, x.cols());
}

}  // namespace interformer
