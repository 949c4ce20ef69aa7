#include "interformer/invariants.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "interformer/checkpoint.hpp"
#include "interformer/cross.hpp"
#include "interformer/csv.hpp"
#include "interformer/errors.hpp"
#include "interformer/features.hpp"
#include "interformer/interaction.hpp"
#include "interformer/metrics.hpp"
#include "interformer/model.hpp"
#include "interformer/optimizer.hpp"
#include "interformer/sequence.hpp"
#include "interformer/synthetic.hpp"

namespace interformer {

namespace {

class Checks {
 public:
  explicit Checks(std::uint64_t seed) : rng_(seed) {}

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

  // Records a check whose worst observed deviation must stay within `tol`.
  void bound(const std::string& name, double worst, double tol) {
    results_.push_back({name, worst <= tol, fmt::format("worst {:.3g} (limit {:.3g})", worst, tol)});
  }
  void expect(const std::string& name, bool ok, std::string detail = {}) {
    results_.push_back({name, ok, std::move(detail)});
  }
  // Runs `fn`, turning an unexpected exception into a failure.
  template <class Fn>
  void guarded(const std::string& name, Fn&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      results_.push_back({name, false, fmt::format("threw: {}", e.what())});
    }
  }
  std::vector<InvariantResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  std::vector<InvariantResult> results_;
};

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.layers = 2;
  c.embedding_dim = 4;
  c.heads = 2;
  c.cls_tokens = 2;
  c.summary_tokens = 2;
  c.pma_tokens = 1;
  c.recent_tokens = 2;
  c.pffn_hidden = 4;
  c.interaction_hidden = 8;
  c.fm_rank = 3;
  c.dcn_rank = 6;
  c.head_sizes = {32, 16};
  c.head_scale = 4;
  return c;
}

SyntheticConfig tiny_data() {
  SyntheticConfig c;
  c.examples = 40;
  c.dense = 2;
  c.sparse = 3;
  c.category_vocab = 4;
  c.sparse_vocab = 5;
  c.users = 6;
  c.sequence_length = 5;
  c.embedding_dim = 4;
  return c;
}

void tensor_checks(Checks& c) {
  double worst = 0;
  for (int rep = 0; rep < 20; ++rep) {
    Graph g;
    Var p = softmax_rows(g.constant(c.random(c.pick(1, 4), c.pick(1, 9), -1e3, 1e3)));
    for (std::size_t r = 0; r < p.rows(); ++r) {
      const auto row = p.value().row(r);
      worst = std::max(worst, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
    }
  }
  c.bound("softmax rows sum to one", worst, 1e-12);

  worst = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t m = c.pick(1, 6), k = c.pick(1, 6), n = c.pick(1, 6), q = c.pick(1, 6);
    Graph g;
    Var a = g.constant(c.random(m, k)), b = g.constant(c.random(k, n)), d = g.constant(c.random(n, q));
    worst = std::max(worst, max_abs_diff(matmul(matmul(a, b), d).value(),
                                         matmul(a, matmul(b, d)).value()));
  }
  c.bound("matmul associativity", worst, 1e-9);

  {
    Graph g;
    Var x = g.leaf(c.random(3, 4)), w = g.leaf(c.random(4, 4));
    Var loss = mean(activation(matmul(x, w), Activation::kTanh));
    g.backward(loss);
    const Tensor gx = g.grad(x), gw = g.grad(w);
    g.zero_grad();
    g.backward(loss);
    c.expect("repeated backward is bit-identical", gx == g.grad(x) && gw == g.grad(w));
  }
}

void attention_checks(Checks& c) {
  double norm_worst = 0, rel_worst = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t group = 2 * c.pick(1, 4), rows = c.pick(1, 5);
    Tensor x = c.random(rows, 2 * group);
    std::vector<double> pos(rows);
    for (double& p : pos) p = static_cast<double>(c.pick(0, 50));
    Graph g;
    const Tensor y = rope(g.constant(x), pos, group).value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < x.cols(); j += 2) {
        const double before = std::hypot(x(r, j), x(r, j + 1));
        const double after = std::hypot(y(r, j), y(r, j + 1));
        norm_worst = std::max(norm_worst, std::abs(before - after));
      }

    const Tensor q = c.random(1, group), k = c.random(1, group);
    const double m = static_cast<double>(c.pick(0, 30)), n = static_cast<double>(c.pick(0, 30));
    const double shift = static_cast<double>(c.pick(1, 40));
    auto score = [&](double pm, double pn) {
      Graph h;
      return dot(rope(h.constant(q), {pm}, group).value().row(0),
                 rope(h.constant(k), {pn}, group).value().row(0));
    };
    rel_worst = std::max(rel_worst, std::abs(score(m, n) - score(m + shift, n + shift)));
  }
  c.bound("rope preserves pair norms", norm_worst, 1e-12);
  c.bound("rope scores depend only on offset", rel_worst, 1e-9);

  double sum_worst = 0;
  bool masked_zero = true;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t rows = c.pick(1, 4), cols = c.pick(1, 8);
    std::vector<std::uint8_t> valid(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) valid[r * cols + j] = c.pick(0, 1);
      valid[r * cols + c.pick(0, cols - 1)] = 1;
    }
    Graph g;
    const Tensor p = masked_softmax_rows(g.constant(c.random(rows, cols, -5, 5)), valid).value();
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0;
      for (std::size_t j = 0; j < cols; ++j) {
        if (valid[r * cols + j]) s += p(r, j);
        else masked_zero = masked_zero && p(r, j) == 0.0;
      }
      sum_worst = std::max(sum_worst, std::abs(s - 1.0));
    }
  }
  c.bound("attention weights over valid keys sum to one", sum_worst, 1e-12);
  c.expect("masked keys get exactly zero weight", masked_zero);

  // Padded slots must not leak into valid outputs of the sequence layer or
  // the sequence summary.
  ModelConfig cfg = tiny_model();
  const std::size_t d = cfg.embedding_dim, batch = 3, T = 5, ccls = cfg.cls_tokens, n_sum = 2;
  ParamStore store;
  init_sequence_layer_params(store, c.rng(), "seq", cfg, n_sum);
  init_seq_summary_params(store, c.rng(), "ssum", cfg);
  const std::vector<std::size_t> seq_len = {0, 2, 5};
  const KeyMask mask = KeyMask::for_sequence(seq_len, ccls, T);
  const Tensor s0 = c.random(batch * (ccls + T), d), xs = c.random(batch * n_sum, d);
  Tensor s1 = s0;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < T - seq_len[b]; ++t)
      for (double& v : s1.row(b * (ccls + T) + ccls + t)) v += 10.0;
  auto run = [&](const Tensor& s) {
    Graph g;
    ParamBinding p(g, store, false);
    Var out = sequence_arch_layer(p, "seq", cfg, g.constant(s), g.constant(xs), n_sum, mask);
    Var sum = summarize_seq(p, "ssum", cfg, out, ccls, seq_len, T);
    return std::pair{out.value(), sum.value()};
  };
  const auto [out0, sum0] = run(s0);
  const auto [out1, sum1] = run(s1);
  bool same = sum0 == sum1;
  for (std::size_t r = 0; r < out0.rows(); ++r) {
    const std::size_t b = r / (ccls + T), t = r % (ccls + T);
    if (!mask.valid[b * (ccls + T) + t]) continue;
    same = same && std::equal(out0.row(r).begin(), out0.row(r).end(), out1.row(r).begin());
  }
  c.expect("padded slots do not affect valid outputs", same);

  bool shapes = true;
  for (std::size_t h : {1, 2}) {
    for (std::size_t cc : {0, 1, 3}) {
      for (std::size_t len : {1, 4, 7}) {
        ModelConfig mc = cfg;
        mc.heads = h;
        mc.cls_tokens = cc;
        ParamStore ps;
        init_sequence_layer_params(ps, c.rng(), "seq", mc, n_sum);
        std::vector<std::size_t> lens(batch);
        for (auto& l : lens) l = c.pick(0, len);
        // without CLS tokens an empty sequence would leave no key to attend to
        if (cc == 0) for (auto& l : lens) l = std::max<std::size_t>(l, 1);
        Graph g;
        ParamBinding p(g, ps, false);
        Var in = g.constant(c.random(batch * (cc + len), d));
        Var out = sequence_arch_layer(p, "seq", mc, in, g.constant(xs), n_sum,
                                      KeyMask::for_sequence(lens, cc, len));
        shapes = shapes && out.value().same_shape(in.value());
      }
    }
  }
  c.expect("sequence layer is shape-preserving", shapes);
}

void cross_checks(Checks& c) {
  const ModelConfig cfg = tiny_model();
  const std::size_t d = cfg.embedding_dim, batch = 3, T = 6;
  const std::size_t ccls = cfg.cls_tokens;
  ParamStore store;
  init_seq_summary_params(store, c.rng(), "ssum", cfg);
  bool arity = true;
  for (std::size_t len = 0; len <= T; ++len) {
    Graph g;
    ParamBinding p(g, store, false);
    const std::vector<std::size_t> lens(batch, len);
    Var out = summarize_seq(p, "ssum", cfg, g.constant(c.random(batch * (ccls + T), d)), ccls,
                            lens, T);
    arity = arity && out.rows() == batch * cfg.seq_summary_tokens() && out.cols() == d;
  }
  c.expect("sequence summary arity is constant", arity);

  const std::size_t n = 5;
  ParamStore xs;
  init_nonseq_summary_params(xs, c.rng(), "xsum", n, cfg.summary_tokens, d);
  xs.get("xsum.gate.W").fill(0.0);
  xs.get("xsum.gate.b").fill(1.0);
  Graph g;
  ParamBinding p(g, xs, false);
  Var x = g.constant(c.random(batch * n, d));
  const Tensor gated = summarize_nonseq(p, "xsum", x, batch, Activation::kIdentity).value();
  const Tensor plain = lce(x, p("xsum.lce"), batch).value();
  c.expect("identity gating with unit gate is transparent", gated == plain);
}

void interaction_checks(Checks& c) {
  bool identity = true;
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t width = c.pick(2, 9), rank = c.pick(1, 3);
    Graph g;
    Var x0 = g.constant(c.random(3, width)), xl = g.constant(c.random(3, width));
    Var b = g.constant(Tensor(1, width));
    identity = identity &&
               dcn_cross_layer(x0, xl, g.constant(Tensor(width, width)), Var{}, b).value() ==
                   xl.value() &&
               dcn_cross_layer(x0, xl, g.constant(Tensor(width, rank)),
                               g.constant(Tensor(rank, width)), b)
                       .value() == xl.value();
  }
  c.expect("zero-weight cross layer is the identity", identity);

  ModelConfig cfg = tiny_model();
  const std::size_t d = cfg.embedding_dim, batch = 2, n = 3;
  bool shapes = true;
  for (Backbone bb : {Backbone::kDot, Backbone::kFm, Backbone::kDcnV2, Backbone::kDhen}) {
    cfg.backbone = bb;
    for (std::size_t cs : {0, 1, 4}) {
      ParamStore store;
      init_interaction_layer_params(store, c.rng(), "inter", cfg, n, cs, d);
      Graph g;
      ParamBinding p(g, store, false);
      Var x = g.constant(c.random(batch * n, d));
      Var s = cs ? g.constant(c.random(batch * cs, d)) : Var{};
      shapes = shapes &&
               interaction_arch_layer(p, "inter", cfg, x, n, s, cs, batch).value().same_shape(
                   x.value());
    }
  }
  c.expect("interaction layer is shape-preserving", shapes);
}

void feature_checks(Checks& c) {
  const SyntheticConfig sc = tiny_data();
  const std::uint64_t data_seed = c.rng()();
  const Dataset data = generate_synthetic(sc, data_seed);
  const Dataset again = generate_synthetic(sc, data_seed);
  c.expect("synthetic data regenerates identically", data.records == again.records);

  const Dataset parsed = parse_csv(to_csv(data), data.schema);
  c.expect("csv roundtrip is the identity", parsed.records == data.records);

  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), 0);
  const RawBatch raw = make_batch(data, idx);
  ParamStore store;
  init_feature_params(store, c.rng(), data.schema);
  const std::string table = "embed.sparse." + data.schema.sparse[0].name;
  const auto target = static_cast<std::size_t>(raw.sparse[0]);
  auto embed = [&](const ParamStore& ps) {
    Graph g;
    ParamBinding p(g, ps, false);
    return embed_batch(data.schema, raw, p).x.value();
  };
  const Tensor base = embed(store);
  ParamStore scaled = store;
  for (double& v : scaled.get(table).row(target)) v *= 2.5;
  const Tensor out = embed(scaled);
  const std::size_t n = data.schema.nonseq_tokens();
  bool linear = true;
  for (std::size_t b = 0; b < raw.size; ++b) {
    const std::size_t row = b * n + 1;
    const bool hit = static_cast<std::size_t>(raw.sparse[b * (n - 1)]) == target;
    for (std::size_t j = 0; j < base.cols(); ++j)
      linear = linear && out(row, j) == (hit ? base(row, j) * 2.5 : base(row, j));
  }
  c.expect("embedding is linear in table rows", linear);

  bool shapes = true;
  for (std::size_t k = 1; k <= 3; ++k) {
    ParamStore ps;
    init_mask_net_params(ps, c.rng(), "mn", k, 4);
    Graph g;
    ParamBinding p(g, ps, false);
    std::vector<Var> seqs;
    for (std::size_t i = 0; i < k; ++i) seqs.push_back(g.constant(c.random(2 * 5, 4)));
    Var out = mask_net(seqs, p, "mn");
    shapes = shapes && out.rows() == 10 && out.cols() == 4;
  }
  c.expect("mask net keeps d x T for any k", shapes);
}

double abs_sum(const ParamStore& grads, std::string_view part) {
  double total = 0;
  for (const auto& [name, t] : grads.entries()) {
    if (!name.starts_with("layer") || name.find(part) == std::string::npos) continue;
    for (double v : t.values()) total += std::abs(v);
  }
  return total;
}

void model_checks(Checks& c) {
  const Dataset data = generate_synthetic(tiny_data(), c.rng()());
  std::vector<std::size_t> idx(12);
  std::iota(idx.begin(), idx.end(), 0);
  const RawBatch raw = make_batch(data, idx);

  bool counts = true;
  for (Backbone bb : {Backbone::kDot, Backbone::kFm, Backbone::kDcnV2, Backbone::kDhen}) {
    for (FlowMode m : kAllModes) {
      ModelConfig cfg = tiny_model();
      cfg.backbone = bb;
      cfg.mode = m;
      counts = counts && parameter_count(cfg, data.schema) ==
                             init_model(cfg, data.schema, 1).params.scalar_count();
    }
  }
  c.expect("parameter count matches the tensors", counts);

  for (FlowMode m : {FlowMode::kSep, FlowMode::kN2S, FlowMode::kS2N, FlowMode::kInt}) {
    ModelConfig cfg = tiny_model();
    cfg.mode = m;
    const Model model = init_model(cfg, data.schema, c.rng()());
    Graph g;
    ParamBinding p(g, model.params);
    g.backward(cross_entropy(interformer_forward(cfg, data.schema, raw, p).probs, raw.labels));
    const ParamStore grads = p.gradients();
    const double ssum = abs_sum(grads, ".ssum."), xsum = abs_sum(grads, ".xsum.");
    const bool s2n = m == FlowMode::kS2N || m == FlowMode::kInt;
    const bool n2s = m == FlowMode::kN2S || m == FlowMode::kInt;
    c.expect(fmt::format("{} gradient flow", mode_name(m)),
             (ssum != 0) == s2n && (xsum != 0) == n2s,
             fmt::format("|d ssum| {:.3g}, |d xsum| {:.3g}", ssum, xsum));
  }

  for (FlowMode m : kAllModes) {
    ModelConfig cfg = tiny_model();
    cfg.mode = m;
    const Model model = init_model(cfg, data.schema, c.rng()());
    std::vector<std::size_t> perm = idx;
    std::shuffle(perm.begin(), perm.end(), c.rng());
    auto logits = [&](std::span<const std::size_t> rows) {
      Graph g;
      ParamBinding p(g, model.params, false);
      return interformer_forward(cfg, data.schema, make_batch(data, rows), p).logits.value();
    };
    const Tensor base = logits(idx), shuffled = logits(perm);
    bool same = true;
    for (std::size_t i = 0; i < perm.size(); ++i) same = same && shuffled[i] == base[perm[i]];
    c.expect(fmt::format("{} forward is batch-order invariant", mode_name(m)), same);
  }

  for (std::size_t layers = 1; layers <= 4; ++layers) {
    ModelConfig cfg = tiny_model();
    cfg.layers = layers;
    c.guarded(fmt::format("{}-layer stack assembles", layers), [&] {
      const Model model = init_model(cfg, data.schema, 3);
      Graph g;
      ParamBinding p(g, model.params);
      const ForwardOutput out = interformer_forward(cfg, data.schema, raw, p);
      g.backward(cross_entropy(out.probs, raw.labels));
      c.expect(fmt::format("{}-layer stack assembles", layers),
               out.logits.rows() == raw.size && out.logits.cols() == 1);
    });
  }

  ModelConfig cfg = tiny_model();
  const Model model = init_model(cfg, data.schema, c.rng()());
  const std::string bytes = serialize_checkpoint(model);
  c.guarded("checkpoint roundtrip", [&] {
    const Model loaded = deserialize_checkpoint(bytes);
    Graph g1, g2;
    ParamBinding p1(g1, model.params, false), p2(g2, loaded.params, false);
    const bool logits_equal = interformer_forward(cfg, data.schema, raw, p1).logits.value() ==
                              interformer_forward(cfg, data.schema, raw, p2).logits.value();
    c.expect("checkpoint roundtrip", serialize_checkpoint(loaded) == bytes && logits_equal);
  });
  std::string flipped = bytes;
  flipped[c.pick(8, flipped.size() - 5)] ^= 0x10;
  bool detected = false;
  try {
    deserialize_checkpoint(flipped);
  } catch (const CorruptionError&) {
    detected = true;
  } catch (const Error&) {
  }
  c.expect("flipped checkpoint byte is detected", detected);
}

void metric_checks(Checks& c) {
  bool monotone = true, symmetric = true;
  double ne_worst = 0, collapse_worst = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = c.pick(4, 40);
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::vector<std::int64_t> users(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::uniform_real_distribution<double>(-3, 3)(c.rng());
      y[i] = static_cast<int>(c.pick(0, 1));
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auc(s, y);
    std::vector<double> ex(n), aff(n), neg(n);
    for (std::size_t i = 0; i < n; ++i) {
      ex[i] = std::exp(s[i]);
      aff[i] = 3.0 * s[i] - 7.0;
      neg[i] = -s[i];
    }
    monotone = monotone && auc(ex, y) == a && auc(aff, y) == a;
    symmetric = symmetric && a + auc(neg, y) == 1.0;
    collapse_worst = std::max(collapse_worst, std::abs(gauc(s, y, users) - a));

    std::vector<double> p(n), p2;
    std::vector<int> y2;
    for (std::size_t i = 0; i < n; ++i) p[i] = 1.0 / (1.0 + std::exp(-s[i]));
    for (int k = 0; k < 3; ++k) {
      p2.insert(p2.end(), p.begin(), p.end());
      y2.insert(y2.end(), y.begin(), y.end());
    }
    ne_worst = std::max(ne_worst, std::abs(normalized_entropy(logloss(p, y), 0.3) -
                                           normalized_entropy(logloss(p2, y2), 0.3)));
  }
  c.expect("auc is invariant to monotone maps", monotone);
  c.expect("auc of negated scores is the complement", symmetric);
  // the positive-count weight cancels up to one rounding
  c.bound("single-user gauc equals auc", collapse_worst, 1e-15);
  c.bound("ne is invariant to dataset size", ne_worst, 1e-12);

  bool decreases = true;
  for (int rep = 0; rep < 10; ++rep) {
    ParamStore ps;
    ps.add("w", c.random(3, 3));
    const Tensor center = c.random(3, 3);
    auto loss = [&](const Tensor& w) {
      double total = 0;
      for (std::size_t i = 0; i < w.size(); ++i) total += (w[i] - center[i]) * (w[i] - center[i]);
      return total;
    };
    ParamStore grads = ps.zeros_like();
    for (std::size_t i = 0; i < center.size(); ++i)
      grads.get("w")[i] = 2.0 * (ps.get("w")[i] - center[i]);
    const double before = loss(ps.get("w"));
    Adam adam(ps, {.lr = 1e-2});
    adam.step(ps, grads);
    decreases = decreases && loss(ps.get("w")) < before;
  }
  c.expect("one adam step decreases a convex quadratic", decreases);
}

}  // namespace

std::vector<InvariantResult> run_invariant_suite(std::uint64_t seed) {
  Checks c(seed);
  c.guarded("tensor", [&] { tensor_checks(c); });
  c.guarded("attention", [&] { attention_checks(c); });
  c.guarded("cross", [&] { cross_checks(c); });
  c.guarded("interaction", [&] { interaction_checks(c); });
  c.guarded("features", [&] { feature_checks(c); });
  c.guarded("model", [&] { model_checks(c); });
  c.guarded("metrics", [&] { metric_checks(c); });
  return c.take();
}

}  // namespace interformer
