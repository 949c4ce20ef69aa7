#include "interformer/gradsuite.hpp"

#include <fmt/format.h>
#include <memory>

#include "interformer/cross.hpp"
#include "interformer/features.hpp"
#include "interformer/interaction.hpp"
#include "interformer/metrics.hpp"
#include "interformer/model.hpp"
#include "interformer/sequence.hpp"

namespace interformer {

namespace {

using ParamFunction =
    std::function<Var(Graph&, std::span<const Var> extra, ParamBinding& params)>;

class Suite {
 public:
  Suite(std::uint64_t seed, const GradCheckOptions& options) : options_(options), rng_(seed) {}

  Tensor random(std::size_t rows, std::size_t cols, double lo = -2.0, double hi = 2.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Tensor t(rows, cols);
    for (double& v : t.values()) v = dist(rng_);
    return t;
  }

  std::size_t pick(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
  }

  Rng& rng() { return rng_; }

  void check(const std::string& name, std::vector<Tensor> inputs, const GraphFunction& fn,
             std::size_t max_entries = 0) {
    GradCheckOptions o = options_;
    o.seed = rng_();
    if (max_entries) o.max_entries_per_input = max_entries;
    results_.push_back(check_gradients(name, inputs, fn, o));
  }

  // Every tensor of `store` becomes a checked input, shifted off its
  // initialization so zero-initialized weights are probed at generic points.
  void check_params(const std::string& name, std::vector<Tensor> extra, const ParamStore& store,
                    const ParamFunction& fn, std::size_t max_entries, double spread = 0.5) {
    auto shared = std::make_shared<ParamStore>(store);
    std::vector<std::string> names;
    std::vector<Tensor> inputs = std::move(extra);
    const std::size_t n_extra = inputs.size();
    std::uniform_real_distribution<double> jitter(-spread, spread);
    for (auto& [pname, t] : shared->entries()) {
      names.push_back(pname);
      Tensor v = t;
      for (double& x : v.values()) x += jitter(rng_);
      inputs.push_back(std::move(v));
    }
    check(
        name, std::move(inputs),
        [shared, names, n_extra, fn](Graph& g, std::span<const Var> in) {
          ParamBinding params(g, *shared);
          for (std::size_t i = 0; i < names.size(); ++i) params.bind(names[i], in[n_extra + i]);
          return fn(g, in.first(n_extra), params);
        },
        max_entries);
  }

  std::vector<GradCheckResult> take() { return std::move(results_); }

 private:
  GradCheckOptions options_;
  Rng rng_;
  std::vector<GradCheckResult> results_;
};

std::vector<std::uint8_t> random_mask(Suite& s, std::size_t rows, std::size_t cols) {
  std::vector<std::uint8_t> m(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t keep = s.pick(0, cols - 1);
    for (std::size_t c = 0; c < cols; ++c) m[r * cols + c] = c == keep || s.pick(0, 1);
  }
  return m;
}

std::vector<std::size_t> random_lengths(Suite& s, std::size_t batch, std::size_t max_len) {
  std::vector<std::size_t> len(batch);
  for (auto& l : len) l = s.pick(0, max_len);
  return len;
}

void tensor_ops(Suite& s) {
  const std::size_t r = s.pick(2, 4), c = s.pick(2, 4), k = s.pick(2, 4);
  s.check("matmul", {s.random(r, k), s.random(k, c)},
          [](Graph&, std::span<const Var> x) { return matmul(x[0], x[1]); });
  s.check("add", {s.random(r, c), s.random(r, c)},
          [](Graph&, std::span<const Var> x) { return add(x[0], x[1]); });
  s.check("sub", {s.random(r, c), s.random(r, c)},
          [](Graph&, std::span<const Var> x) { return sub(x[0], x[1]); });
  s.check("hadamard", {s.random(r, c), s.random(r, c)},
          [](Graph&, std::span<const Var> x) { return hadamard(x[0], x[1]); });
  s.check("scale", {s.random(r, c)},
          [](Graph&, std::span<const Var> x) { return scale(x[0], -1.7); });
  s.check("add_row_broadcast", {s.random(r, c), s.random(1, c)},
          [](Graph&, std::span<const Var> x) { return add_row_broadcast(x[0], x[1]); });
  for (Activation a : {Activation::kSigmoid, Activation::kTanh, Activation::kRelu,
                       Activation::kSwish, Activation::kIdentity}) {
    s.check(fmt::format("activation/{}", activation_name(a)), {s.random(r, c)},
            [a](Graph&, std::span<const Var> x) { return activation(x[0], a); });
  }
  s.check("softmax_rows", {s.random(r, c)},
          [](Graph&, std::span<const Var> x) { return softmax_rows(x[0]); });
  auto mask = random_mask(s, r, c);
  s.check("masked_softmax_rows", {s.random(r, c)}, [mask](Graph&, std::span<const Var> x) {
    return masked_softmax_rows(x[0], mask);
  });
  s.check("layer_norm", {s.random(r, c), s.random(1, c), s.random(1, c)},
          [](Graph&, std::span<const Var> x) { return layer_norm(x[0], x[1], x[2], 1e-5); });
  s.check("sum", {s.random(r, c)}, [](Graph&, std::span<const Var> x) { return sum(x[0]); });
  s.check("mean", {s.random(r, c)}, [](Graph&, std::span<const Var> x) { return mean(x[0]); });
  s.check("row_sum", {s.random(r, c)},
          [](Graph&, std::span<const Var> x) { return row_sum(x[0]); });
  s.check("log", {s.random(r, c, 0.2, 2.0)},
          [](Graph&, std::span<const Var> x) { return log(x[0]); });
  // Keep inputs clear of the clamp boundaries where the derivative jumps.
  Tensor clamp_in = s.random(r, c);
  for (double& v : clamp_in.values())
    if (std::abs(std::abs(v) - 1.5) < 1e-3) v *= 0.9;
  s.check("clamp", {clamp_in},
          [](Graph&, std::span<const Var> x) { return clamp(x[0], -1.5, 1.5); });
  s.check("reshape", {s.random(r, 2 * c)},
          [r, c](Graph&, std::span<const Var> x) { return reshape(x[0], 2 * r, c); });
  s.check("transpose", {s.random(r, c)},
          [](Graph&, std::span<const Var> x) { return transpose(x[0]); });
  s.check("slice_cols", {s.random(r, c + 2)},
          [c](Graph&, std::span<const Var> x) { return slice_cols(x[0], 1, c); });
  s.check("concat_cols", {s.random(r, c), s.random(r, k)},
          [](Graph&, std::span<const Var> x) { return concat_cols(x); });
  const std::size_t b = s.pick(2, 3), na = s.pick(1, 3), nb = s.pick(1, 3), d = s.pick(2, 4);
  s.check("concat_blocks", {s.random(b * na, d), s.random(b * nb, d)},
          [b, na, nb](Graph&, std::span<const Var> x) {
            Block parts[] = {{x[0], na}, {x[1], nb}};
            return concat_blocks(parts, b);
          });
  std::vector<std::ptrdiff_t> idx = {2, -1, 0, 2, 1};
  s.check("gather_rows", {s.random(3, d)},
          [idx](Graph&, std::span<const Var> x) { return gather_rows(x[0], idx); });
  s.check("batched_matmul", {s.random(b * na, k), s.random(b * k, nb)},
          [b](Graph&, std::span<const Var> x) { return batched_matmul(x[0], x[1], b, false); });
  s.check("batched_matmul/transposed", {s.random(b * na, k), s.random(b * nb, k)},
          [b](Graph&, std::span<const Var> x) { return batched_matmul(x[0], x[1], b, true); });
  s.check("mix_blocks", {s.random(b * (na + 1), d), s.random(na + 1, na)},
          [b](Graph&, std::span<const Var> x) { return mix_blocks(x[0], x[1], b); });
  std::vector<double> pos(r);
  for (auto& p : pos) p = static_cast<double>(s.pick(0, 20));
  s.check("rope", {s.random(r, 4)},
          [pos](Graph&, std::span<const Var> x) { return rope(x[0], pos, 2); });
}

ModelConfig small_config() {
  ModelConfig c;
  c.layers = 1;
  c.embedding_dim = 4;
  c.heads = 2;
  c.cls_tokens = 2;
  c.summary_tokens = 2;
  c.pma_tokens = 1;
  c.recent_tokens = 1;
  c.pffn_hidden = 4;
  c.interaction_hidden = 8;
  c.fm_rank = 3;
  c.dcn_rank = 6;
  c.head_sizes = {32, 16};
  c.head_scale = 4;
  return c;
}

void arch_ops(Suite& s) {
  const std::size_t D = s.pick(3, 5), rank = s.pick(2, 3), b = 2;
  s.check("fm_second_order", {s.random(b, D), s.random(D, rank), s.random(D, 1), s.random(1, 1)},
          [](Graph&, std::span<const Var> x) { return fm_second_order(x[0], x[1], x[2], x[3]); });
  const std::size_t n = s.pick(2, 4), d = 4;
  s.check("dot_interaction", {s.random(b * n, d)},
          [b](Graph&, std::span<const Var> x) { return dot_interaction(x[0], b); });
  s.check("dcn_cross_layer", {s.random(b, D), s.random(b, D), s.random(D, D), s.random(1, D)},
          [](Graph&, std::span<const Var> x) {
            return dcn_cross_layer(x[0], x[1], x[2], Var{}, x[3]);
          });
  s.check("dcn_cross_layer/low_rank",
          {s.random(b, D), s.random(b, D), s.random(D, rank), s.random(rank, D), s.random(1, D)},
          [](Graph&, std::span<const Var> x) {
            return dcn_cross_layer(x[0], x[1], x[2], x[3], x[4]);
          });

  ModelConfig cfg = small_config();
  {
    ParamStore store;
    init_dhen_layer_params(store, s.rng(), "dhen", cfg, n, d);
    s.check_params("dhen_layer", {s.random(b * n, d)}, store,
                   [cfg, b](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return dhen_layer(p, "dhen", cfg, x[0], b);
                   },
                   6);
  }
  for (Backbone bb : {Backbone::kDot, Backbone::kFm, Backbone::kDcnV2, Backbone::kDhen}) {
    cfg.backbone = bb;
    const std::size_t cs = 2;
    ParamStore store;
    init_interaction_layer_params(store, s.rng(), "inter", cfg, n, cs, d);
    s.check_params(fmt::format("interaction_arch_layer/{}", backbone_name(bb)),
                   {s.random(b * n, d), s.random(b * cs, d)}, store,
                   [cfg, b, n, cs](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return interaction_arch_layer(p, "inter", cfg, x[0], n, x[1], cs, b);
                   },
                   6);
  }
  cfg.backbone = Backbone::kDhen;

  // Attention family.
  const std::size_t tq = s.pick(1, 3), tk = s.pick(2, 4);
  KeyMask mask{b, tk, random_mask(s, b, tk)};
  s.check("scaled_dot_attention", {s.random(b * tq, 2), s.random(b * tk, 2), s.random(b * tk, 3)},
          [mask](Graph&, std::span<const Var> x) {
            return scaled_dot_attention(x[0], x[1], x[2], mask);
          });
  {
    ParamStore store;
    init_attention_params(store, s.rng(), "mha", d, 2);
    const auto pos = sequence_positions(b, tk);
    s.check_params("multi_head_attention", {s.random(b * tk, d)}, store,
                   [mask, pos](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return multi_head_attention(p, "mha", x[0], x[0], 2, mask, {pos, pos});
                   },
                   0);
  }
  {
    ParamStore store;
    init_pma_params(store, s.rng(), "pma", d, 2, 2);
    s.check_params("pma", {s.random(b * tk, d)}, store,
                   [mask](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return pma(p, "pma", x[0], 2, mask);
                   },
                   0);
  }
  {
    ParamStore store;
    init_pffn_params(store, s.rng(), "pffn", 2, d, 3);
    s.check_params("pffn", {s.random(b * 2, d), s.random(b * tk, d)}, store,
                   [b](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return pffn(p, "pffn", x[0], 2, x[1], b, Activation::kSwish);
                   },
                   8);
  }
  {
    const std::size_t T = 3;
    const auto len = random_lengths(s, b, T);
    const KeyMask smask = KeyMask::for_sequence(len, cfg.cls_tokens, T);
    ParamStore store;
    init_sequence_layer_params(store, s.rng(), "seq", cfg, cfg.summary_tokens);
    s.check_params("sequence_arch_layer",
                   {s.random(b * (cfg.cls_tokens + T), d), s.random(b * cfg.summary_tokens, d)},
                   store,
                   [cfg, smask](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return sequence_arch_layer(p, "seq", cfg, x[0], x[1], cfg.summary_tokens,
                                                smask);
                   },
                   8);
    ParamStore sstore;
    init_seq_summary_params(sstore, s.rng(), "ssum", cfg);
    s.check_params("summarize_seq", {s.random(b * (cfg.cls_tokens + T), d)}, sstore,
                   [cfg, len, T](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return summarize_seq(p, "ssum", cfg, x[0], cfg.cls_tokens, len, T);
                   },
                   8);
  }

  // Cross arch.
  for (Activation a : {Activation::kIdentity, Activation::kSigmoid, Activation::kTanh}) {
    ParamStore store;
    init_gating_params(store, s.rng(), "gate", n, d);
    s.check_params(fmt::format("self_gating/{}", activation_name(a)), {s.random(b * n, d)}, store,
                   [a, b](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return self_gating(p, "gate", x[0], b, a);
                   },
                   8);
  }
  s.check("lce", {s.random(b * (n + 1), d), s.random(n + 1, n)},
          [b](Graph&, std::span<const Var> x) { return lce(x[0], x[1], b); });
  {
    ParamStore store;
    init_nonseq_summary_params(store, s.rng(), "xsum", n + 1, n, d);
    s.check_params("summarize_nonseq", {s.random(b * (n + 1), d)}, store,
                   [b](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return summarize_nonseq(p, "xsum", x[0], b, Activation::kIdentity);
                   },
                   8);
  }

  // Preprocessing and loss.
  {
    const std::size_t k = 2, T = 3;
    ParamStore store;
    init_mask_net_params(store, s.rng(), "masknet", k, d);
    s.check_params("mask_net", {s.random(b * T, d), s.random(b * T, d)}, store,
                   [](Graph&, std::span<const Var> x, ParamBinding& p) {
                     return mask_net(x, p, "masknet");
                   },
                   8);
  }
  {
    std::vector<int> labels(4);
    for (auto& l : labels) l = static_cast<int>(s.pick(0, 1));
    s.check("cross_entropy", {s.random(4, 1, 0.05, 0.95)},
            [labels](Graph&, std::span<const Var> x) { return cross_entropy(x[0], labels); });
  }
}

void end_to_end(Suite& s) {
  FeatureSchema schema;
  schema.dense_count = 2;
  schema.embedding_dim = 4;
  schema.sparse = {{"a", 4}, {"b", 3}, {"c", 5}};
  schema.sequences = {{"s0", 5, 4}, {"s1", 3, 4}};
  ModelConfig cfg = small_config();
  cfg.mode = FlowMode::kInt;

  std::vector<Record> records(3);
  for (auto& r : records) {
    r.label = static_cast<int>(s.pick(0, 1));
    r.dense = {s.random(1, 1)(0, 0), s.random(1, 1)(0, 0)};
    r.sparse = {std::int64_t(s.pick(0, 3)), std::int64_t(s.pick(0, 2)), std::int64_t(s.pick(0, 4))};
    const std::size_t len = s.pick(0, 4);
    r.sequences.assign(2, {});
    for (std::size_t t = 0; t < len; ++t) {
      r.sequences[0].push_back(std::int64_t(s.pick(0, 4)));
      r.sequences[1].push_back(std::int64_t(s.pick(0, 2)));
    }
  }
  const RawBatch raw = make_batch(schema, records);
  const Model model = init_model(cfg, schema, s.rng()());
  // A full +-0.5 shift of every tensor can saturate a prediction near 1, where
  // log(1 - p) keeps only ~6 digits and central differences stop resolving it.
  s.check_params("model/int/L1", {}, model.params,
                 [cfg, schema, raw](Graph&, std::span<const Var>, ParamBinding& p) {
                   return cross_entropy(interformer_forward(cfg, schema, raw, p).probs, raw.labels);
                 },
                 4, 0.25);
}

}  // namespace

std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed,
                                                const GradCheckOptions& options) {
  Suite s(seed, options);
  tensor_ops(s);
  arch_ops(s);
  end_to_end(s);
  return s.take();
}

}  // namespace interformer
