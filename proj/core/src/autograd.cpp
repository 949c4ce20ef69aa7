#include "interformer/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kBatchedMatMul: return "batched_matmul";
    case OpKind::kMixBlocks: return "mix_blocks";
    case OpKind::kElementwise: return "elementwise";
    case OpKind::kScale: return "scale";
    case OpKind::kAddRowBroadcast: return "add_row_broadcast";
    case OpKind::kActivation: return "activation";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLayerNorm: return "layer_norm";
    case OpKind::kReduce: return "reduce";
    case OpKind::kReshape: return "reshape";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kSliceCols: return "slice_cols";
    case OpKind::kConcatCols: return "concat_cols";
    case OpKind::kConcatBlocks: return "concat_blocks";
    case OpKind::kGatherRows: return "gather_rows";
    case OpKind::kRope: return "rope";
    case OpKind::kLog: return "log";
    case OpKind::kClamp: return "clamp";
  }
  return "unknown";
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  require_finite(value, "leaf");
  nodes_.push_back(Node{OpKind::kLeaf, {}, std::move(value), {}, requires_grad, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
  require_finite(value, "constant");
  nodes_.push_back(Node{OpKind::kConstant, {}, std::move(value), {}, false, {}});
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(fmt::format("non-finite output from {}", op_name(kind)));
  }
  bool needs = false;
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw ContractError("op input is not part of this graph");
    needs = needs || nodes_[id].requires_grad;
  }
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), {}, needs,
                        needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor* Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
  return &n.grad;
}

void Graph::zero_grad() {
  for (auto& n : nodes_) n.grad = Tensor();
}

void Graph::backward(Var loss) {
  if (&loss.graph() != this) throw ContractError("loss belongs to a different graph");
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError(
        fmt::format("backward needs a 1x1 loss, got {}", lv.shape_string()));
  }
  zero_grad();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())->fill(1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) return Tensor(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

Graph& same_graph(Var a, Var b) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw ContractError("operands belong to different graphs");
  }
  return a.graph();
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (!a.same_shape(b)) {
    throw DimensionError(
        fmt::format("{}: shape mismatch {} vs {}", op, a.shape_string(), b.shape_string()));
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < src.size(); ++i) (*dst)[i] += src[i];
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError(
        fmt::format("matmul: {} x {} not conformable", av.shape_string(), bv.shape_string()));
  }
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out(m, n);
  gemm_accumulate(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::kMatMul, {ia, ib}, std::move(out),
                  [ia, ib, m, k, n](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    if (Tensor* ga = g.grad_buffer(ia)) {
                      gemm_nt_accumulate(go.values().data(), g.value(ib).values().data(),
                                         ga->values().data(), m, n, k);
                    }
                    if (Tensor* gb = g.grad_buffer(ib)) {
                      gemm_tn_accumulate(g.value(ia).values().data(), go.values().data(),
                                         gb->values().data(), k, m, n);
                    }
                  });
}

Var elementwise(Var a, Var b, Elementwise kind) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_same_shape(av, bv, "elementwise");
  Tensor out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (kind) {
      case Elementwise::kAdd: out[i] = av[i] + bv[i]; break;
      case Elementwise::kSub: out[i] = av[i] - bv[i]; break;
      case Elementwise::kHadamard: out[i] = av[i] * bv[i]; break;
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::kElementwise, {ia, ib}, std::move(out),
                  [ia, ib, kind](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    Tensor* ga = g.grad_buffer(ia);
                    Tensor* gb = g.grad_buffer(ib);
                    const Tensor& av = g.value(ia);
                    const Tensor& bv = g.value(ib);
                    for (std::size_t i = 0; i < go.size(); ++i) {
                      switch (kind) {
                        case Elementwise::kAdd:
                          if (ga) (*ga)[i] += go[i];
                          if (gb) (*gb)[i] += go[i];
                          break;
                        case Elementwise::kSub:
                          if (ga) (*ga)[i] += go[i];
                          if (gb) (*gb)[i] -= go[i];
                          break;
                        case Elementwise::kHadamard:
                          if (ga) (*ga)[i] += go[i] * bv[i];
                          if (gb) (*gb)[i] += go[i] * av[i];
                          break;
                      }
                    }
                  });
}

Var scale(Var a, double factor) {
  Graph& g = a.graph();
  Tensor out = a.value();
  for (double& v : out.values()) v *= factor;
  const std::size_t ia = a.id();
  return g.record(OpKind::kScale, {ia}, std::move(out), [ia, factor](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    Tensor* ga = g.grad_buffer(ia);
    for (std::size_t i = 0; i < go.size(); ++i) (*ga)[i] += factor * go[i];
  });
}

Var add_row_broadcast(Var a, Var row) {
  Graph& g = same_graph(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != av.cols()) {
    throw DimensionError(fmt::format("add_row_broadcast: row {} does not fit {}",
                                     rv.shape_string(), av.shape_string()));
  }
  Tensor out = av;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
  const std::size_t ia = a.id(), ir = row.id();
  return g.record(OpKind::kAddRowBroadcast, {ia, ir}, std::move(out),
                  [ia, ir](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    accumulate(g.grad_buffer(ia), go);
                    if (Tensor* gr = g.grad_buffer(ir)) {
                      for (std::size_t r = 0; r < go.rows(); ++r)
                        for (std::size_t c = 0; c < go.cols(); ++c) (*gr)[c] += go(r, c);
                    }
                  });
}

double activate(double x, Activation kind) {
  switch (kind) {
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kTanh: return std::tanh(x);
    case Activation::kRelu: return x > 0 ? x : 0.0;
    case Activation::kSwish: return x * sigmoid(x);
    case Activation::kIdentity: return x;
  }
  return x;
}

Activation parse_activation(std::string_view name) {
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "tanh") return Activation::kTanh;
  if (name == "relu") return Activation::kRelu;
  if (name == "swish") return Activation::kSwish;
  if (name == "identity") return Activation::kIdentity;
  throw ConfigError(fmt::format("unknown activation '{}'", name));
}

std::string_view activation_name(Activation kind) {
  switch (kind) {
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kTanh: return "tanh";
    case Activation::kRelu: return "relu";
    case Activation::kSwish: return "swish";
    case Activation::kIdentity: return "identity";
  }
  return "identity";
}

Var activation(Var x, Activation kind) {
  Graph& g = x.graph();
  Tensor out = x.value();
  for (double& v : out.values()) v = activate(v, kind);
  const std::size_t ix = x.id();
  return g.record(OpKind::kActivation, {ix}, std::move(out), [ix, kind](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& xv = g.value(ix);
    const Tensor& yv = g.value(self);
    Tensor* gx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < go.size(); ++i) {
      double d = 1.0;
      switch (kind) {
        case Activation::kSigmoid: d = yv[i] * (1.0 - yv[i]); break;
        case Activation::kTanh: d = 1.0 - yv[i] * yv[i]; break;
        case Activation::kRelu: d = xv[i] > 0 ? 1.0 : 0.0; break;
        case Activation::kSwish: {
          const double s = sigmoid(xv[i]);
          d = s + xv[i] * s * (1.0 - s);
          break;
        }
        case Activation::kIdentity: break;
      }
      (*gx)[i] += go[i] * d;
    }
  });
}

namespace {

Var softmax_impl(Var x, std::vector<std::uint8_t> valid) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  const bool masked = !valid.empty();
  if (masked && valid.size() != xv.size()) {
    throw DimensionError(fmt::format("masked_softmax_rows: mask has {} entries for {}",
                                     valid.size(), xv.shape_string()));
  }
  const std::size_t rows = xv.rows(), cols = xv.cols();
  Tensor out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (!masked || valid[r * cols + c]) mx = std::max(mx, xv(r, c));
    if (!std::isfinite(mx)) {
      throw DegenerateAttentionError(fmt::format("row {} has no valid entry", r));
    }
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (masked && !valid[r * cols + c]) continue;
      out(r, c) = std::exp(xv(r, c) - mx);
      z += out(r, c);
    }
    for (std::size_t c = 0; c < cols; ++c) out(r, c) /= z;
  }
  const std::size_t ix = x.id();
  // Masked entries have y == 0, so the standard Jacobian leaves them at zero.
  return g.record(OpKind::kSoftmax, {ix}, std::move(out), [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& y = g.value(self);
    Tensor* gx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += go(r, c) * y(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c) (*gx)(r, c) += y(r, c) * (go(r, c) - dot);
    }
  });
}

}  // namespace

Var softmax_rows(Var x) { return softmax_impl(x, {}); }

Var masked_softmax_rows(Var x, std::vector<std::uint8_t> valid) {
  if (valid.empty() && x.value().size() != 0) {
    throw DimensionError("masked_softmax_rows: empty mask");
  }
  return softmax_impl(x, std::move(valid));
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = same_graph(x, gamma);
  same_graph(x, beta);
  const Tensor& xv = x.value();
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.rows() != 1 || gamma.cols() != cols || beta.rows() != 1 || beta.cols() != cols) {
    throw DimensionError(fmt::format("layer_norm: gamma {} / beta {} do not fit {}",
                                     gamma.value().shape_string(), beta.value().shape_string(),
                                     xv.shape_string()));
  }
  if (!(eps > 0)) throw ConfigError("layer_norm: eps must be positive");
  Tensor xhat(rows, cols);
  std::vector<double> inv_std(rows);
  Tensor out(rows, cols);
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mu += xv(r, c);
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) var += (xv(r, c) - mu) * (xv(r, c) - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      xhat(r, c) = (xv(r, c) - mu) * inv_std[r];
      out(r, c) = gv[c] * xhat(r, c) + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return g.record(
      OpKind::kLayerNorm, {ix, ig, ib}, std::move(out),
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g,
                                                                         std::size_t self) {
        const Tensor& go = g.out_grad(self);
        const Tensor& gv = g.value(ig);
        const std::size_t rows = go.rows(), cols = go.cols();
        if (Tensor* gx = g.grad_buffer(ix)) {
          const double inv_n = 1.0 / static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0, mean_dx = 0.0;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = go(r, c) * gv[c];
              mean_d += d;
              mean_dx += d * xhat(r, c);
            }
            mean_d *= inv_n;
            mean_dx *= inv_n;
            for (std::size_t c = 0; c < cols; ++c) {
              const double d = go(r, c) * gv[c];
              (*gx)(r, c) += inv_std[r] * (d - mean_d - xhat(r, c) * mean_dx);
            }
          }
        }
        Tensor* gg = g.grad_buffer(ig);
        Tensor* gb = g.grad_buffer(ib);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < cols; ++c) {
            if (gg) (*gg)[c] += go(r, c) * xhat(r, c);
            if (gb) (*gb)[c] += go(r, c);
          }
        }
      });
}

Var sum(Var x) {
  Graph& g = x.graph();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t ix = x.id();
  return g.record(OpKind::kReduce, {ix}, Tensor::scalar(s), [ix](Graph& g, std::size_t self) {
    const double go = g.out_grad(self)[0];
    for (double& v : g.grad_buffer(ix)->values()) v += go;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var row_sum(Var x) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  Tensor out(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out[r] += xv(r, c);
  const std::size_t ix = x.id();
  return g.record(OpKind::kReduce, {ix}, std::move(out), [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    Tensor* gx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < gx->rows(); ++r)
      for (std::size_t c = 0; c < gx->cols(); ++c) (*gx)(r, c) += go[r];
  });
}

Var log(Var x) {
  Graph& g = x.graph();
  Tensor out = x.value();
  for (double& v : out.values()) {
    if (!(v > 0)) throw NumericError("log of a non-positive value");
    v = std::log(v);
  }
  const std::size_t ix = x.id();
  return g.record(OpKind::kLog, {ix}, std::move(out), [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& xv = g.value(ix);
    Tensor* gx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i] / xv[i];
  });
}

Var clamp(Var x, double lo, double hi) {
  Graph& g = x.graph();
  Tensor out = x.value();
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  const std::size_t ix = x.id();
  return g.record(OpKind::kClamp, {ix}, std::move(out), [ix, lo, hi](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    const Tensor& xv = g.value(ix);
    Tensor* gx = g.grad_buffer(ix);
    for (std::size_t i = 0; i < go.size(); ++i)
      if (xv[i] >= lo && xv[i] <= hi) (*gx)[i] += go[i];
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Graph& g = x.graph();
  Tensor out = x.value().reshaped(rows, cols);
  const std::size_t ix = x.id();
  return g.record(OpKind::kReshape, {ix}, std::move(out), [ix](Graph& g, std::size_t self) {
    accumulate(g.grad_buffer(ix), g.out_grad(self));
  });
}

Var transpose(Var x) {
  Graph& g = x.graph();
  Tensor out = x.value().transposed();
  const std::size_t ix = x.id();
  return g.record(OpKind::kTranspose, {ix}, std::move(out), [ix](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    Tensor* gx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < go.rows(); ++r)
      for (std::size_t c = 0; c < go.cols(); ++c) (*gx)(c, r) += go(r, c);
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  if (begin + count > xv.cols()) {
    throw DimensionError(fmt::format("slice_cols [{}, {}) out of range for {}", begin,
                                     begin + count, xv.shape_string()));
  }
  Tensor out(xv.rows(), count);
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  const std::size_t ix = x.id();
  return g.record(OpKind::kSliceCols, {ix}, std::move(out),
                  [ix, begin](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    Tensor* gx = g.grad_buffer(ix);
                    for (std::size_t r = 0; r < go.rows(); ++r)
                      for (std::size_t c = 0; c < go.cols(); ++c) (*gx)(r, begin + c) += go(r, c);
                  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols of nothing");
  Graph& g = parts.front().graph();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    same_graph(parts.front(), p);
    if (p.rows() != rows) {
      throw DimensionError(fmt::format("concat_cols: row count {} vs {}", p.rows(), rows));
    }
    cols += p.cols();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, off + c) = pv(r, c);
    off += pv.cols();
  }
  return g.record(OpKind::kConcatCols, ids, std::move(out), [ids](Graph& g, std::size_t self) {
    const Tensor& go = g.out_grad(self);
    std::size_t off = 0;
    for (std::size_t id : ids) {
      const std::size_t w = g.value(id).cols();
      if (Tensor* gp = g.grad_buffer(id)) {
        for (std::size_t r = 0; r < go.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) (*gp)(r, c) += go(r, off + c);
      }
      off += w;
    }
  });
}

Var concat_blocks(std::span<const Block> parts, std::size_t batch) {
  if (parts.empty()) throw DimensionError("concat_blocks of nothing");
  Graph& g = parts.front().var.graph();
  const std::size_t cols = parts.front().var.cols();
  std::size_t tokens = 0;
  std::vector<std::size_t> ids, widths;
  for (const Block& p : parts) {
    same_graph(parts.front().var, p.var);
    if (p.var.rows() != batch * p.tokens) {
      throw DimensionError(fmt::format("concat_blocks: {} rows is not {} x {}", p.var.rows(),
                                       batch, p.tokens));
    }
    if (p.var.cols() != cols) {
      throw DimensionError(
          fmt::format("concat_blocks: feature width {} vs {}", p.var.cols(), cols));
    }
    tokens += p.tokens;
    ids.push_back(p.var.id());
    widths.push_back(p.tokens);
  }
  Tensor out(batch * tokens, cols);
  for (std::size_t b = 0; b < batch; ++b) {
    std::size_t row = b * tokens;
    for (const Block& p : parts) {
      const Tensor& pv = p.var.value();
      for (std::size_t t = 0; t < p.tokens; ++t, ++row)
        std::copy_n(pv.row(b * p.tokens + t).data(), cols, out.row(row).data());
    }
  }
  return g.record(OpKind::kConcatBlocks, ids, std::move(out),
                  [ids, widths, batch, tokens](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    const std::size_t cols = go.cols();
                    std::size_t off = 0;
                    for (std::size_t i = 0; i < ids.size(); ++i) {
                      if (Tensor* gp = g.grad_buffer(ids[i])) {
                        for (std::size_t b = 0; b < batch; ++b)
                          for (std::size_t t = 0; t < widths[i]; ++t) {
                            auto src = go.row(b * tokens + off + t);
                            auto dst = gp->row(b * widths[i] + t);
                            for (std::size_t c = 0; c < cols; ++c) dst[c] += src[c];
                          }
                      }
                      off += widths[i];
                    }
                  });
}

Var gather_rows(Var x, std::vector<std::ptrdiff_t> index) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  Tensor out(index.size(), xv.cols());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const std::ptrdiff_t src = index[r];
    if (src < -1 || src >= static_cast<std::ptrdiff_t>(xv.rows())) {
      throw DimensionError(
          fmt::format("gather_rows: index {} out of range for {}", src, xv.shape_string()));
    }
    if (src >= 0) std::copy_n(xv.row(src).data(), xv.cols(), out.row(r).data());
  }
  const std::size_t ix = x.id();
  return g.record(OpKind::kGatherRows, {ix}, std::move(out),
                  [ix, index = std::move(index)](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    Tensor* gx = g.grad_buffer(ix);
                    for (std::size_t r = 0; r < index.size(); ++r) {
                      if (index[r] < 0) continue;
                      auto dst = gx->row(index[r]);
                      auto src = go.row(r);
                      for (std::size_t c = 0; c < go.cols(); ++c) dst[c] += src[c];
                    }
                  });
}

Var batched_matmul(Var a, Var b, std::size_t batch, bool transpose_b) {
  Graph& g = same_graph(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (batch == 0 || av.rows() % batch != 0 || bv.rows() % batch != 0) {
    throw DimensionError(fmt::format("batched_matmul: {} / {} not divisible into {} blocks",
                                     av.shape_string(), bv.shape_string(), batch));
  }
  const std::size_t p = av.rows() / batch, q = av.cols();
  const std::size_t b_rows = bv.rows() / batch;
  const std::size_t inner = transpose_b ? bv.cols() : b_rows;
  const std::size_t r = transpose_b ? b_rows : bv.cols();
  if (inner != q) {
    throw DimensionError(fmt::format("batched_matmul: blocks {}x{} and {}x{}{} not conformable",
                                     p, q, b_rows, bv.cols(), transpose_b ? "^T" : ""));
  }
  Tensor out(batch * p, r);
  for (std::size_t i = 0; i < batch; ++i) {
    const double* ab = av.values().data() + i * p * q;
    const double* bb = bv.values().data() + i * b_rows * bv.cols();
    double* ob = out.values().data() + i * p * r;
    if (transpose_b) {
      gemm_nt_accumulate(ab, bb, ob, p, q, r);
    } else {
      gemm_accumulate(ab, bb, ob, p, q, r);
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return g.record(OpKind::kBatchedMatMul, {ia, ib}, std::move(out),
                  [ia, ib, batch, p, q, r, transpose_b](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    Tensor* ga = g.grad_buffer(ia);
                    Tensor* gb = g.grad_buffer(ib);
                    const Tensor& av = g.value(ia);
                    const Tensor& bv = g.value(ib);
                    const std::size_t bblock = q * r;
                    for (std::size_t i = 0; i < batch; ++i) {
                      const double* gob = go.values().data() + i * p * r;
                      const double* ab = av.values().data() + i * p * q;
                      const double* bb = bv.values().data() + i * bblock;
                      if (transpose_b) {
                        // out = a * b^T with b block r x q.
                        if (ga) gemm_accumulate(gob, bb, ga->values().data() + i * p * q, p, r, q);
                        if (gb) gemm_tn_accumulate(gob, ab, gb->values().data() + i * bblock, r, p, q);
                      } else {
                        // out = a * b with b block q x r.
                        if (ga) gemm_nt_accumulate(gob, bb, ga->values().data() + i * p * q, p, r, q);
                        if (gb) gemm_tn_accumulate(ab, gob, gb->values().data() + i * bblock, q, p, r);
                      }
                    }
                  });
}

Var mix_blocks(Var x, Var mix, std::size_t batch) {
  Graph& g = same_graph(x, mix);
  const Tensor& xv = x.value();
  const Tensor& mv = mix.value();
  const std::size_t n = mv.rows(), m = mv.cols(), d = xv.cols();
  if (batch == 0 || xv.rows() != batch * n) {
    throw DimensionError(fmt::format("mix_blocks: {} is not {} blocks of {} tokens for mix {}",
                                     xv.shape_string(), batch, n, mv.shape_string()));
  }
  Tensor out(batch * m, d);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm_tn_accumulate(mv.values().data(), xv.values().data() + i * n * d,
                       out.values().data() + i * m * d, m, n, d);
  }
  const std::size_t ix = x.id(), im = mix.id();
  return g.record(OpKind::kMixBlocks, {ix, im}, std::move(out),
                  [ix, im, batch, n, m, d](Graph& g, std::size_t self) {
                    const Tensor& go = g.out_grad(self);
                    Tensor* gx = g.grad_buffer(ix);
                    Tensor* gm = g.grad_buffer(im);
                    const Tensor& xv = g.value(ix);
                    const Tensor& mv = g.value(im);
                    for (std::size_t i = 0; i < batch; ++i) {
                      const double* gob = go.values().data() + i * m * d;
                      if (gx) {
                        gemm_accumulate(mv.values().data(), gob,
                                        gx->values().data() + i * n * d, n, m, d);
                      }
                      if (gm) {
                        gemm_nt_accumulate(xv.values().data() + i * n * d, gob,
                                           gm->values().data(), n, d, m);
                      }
                    }
                  });
}

namespace {

void rotate_rows(const Tensor& in, Tensor& out, const std::vector<double>& positions,
                 std::size_t group, double direction) {
  const std::size_t cols = in.cols();
  const std::size_t half = group / 2;
  std::vector<double> freq(half);
  for (std::size_t i = 0; i < half; ++i)
    freq[i] = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(group));
  for (std::size_t r = 0; r < in.rows(); ++r) {
    for (std::size_t i = 0; i < half; ++i) {
      const double angle = positions[r] * freq[i];
      const double cs = std::cos(angle);
      const double sn = direction * std::sin(angle);
      for (std::size_t base = 0; base < cols; base += group) {
        const std::size_t c0 = base + 2 * i, c1 = c0 + 1;
        const double x0 = in(r, c0), x1 = in(r, c1);
        out(r, c0) += x0 * cs - x1 * sn;
        out(r, c1) += x0 * sn + x1 * cs;
      }
    }
  }
}

}  // namespace

Var rope(Var x, std::vector<double> positions, std::size_t group) {
  Graph& g = x.graph();
  const Tensor& xv = x.value();
  if (group == 0 || group % 2 != 0) {
    throw ConfigError(fmt::format("rope needs an even rotation group, got {}", group));
  }
  if (xv.cols() % group != 0) {
    throw DimensionError(
        fmt::format("rope: width {} is not a multiple of group {}", xv.cols(), group));
  }
  if (positions.size() != xv.rows()) {
    throw DimensionError(
        fmt::format("rope: {} positions for {} rows", positions.size(), xv.rows()));
  }
  Tensor out(xv.rows(), xv.cols());
  rotate_rows(xv, out, positions, group, 1.0);
  const std::size_t ix = x.id();
  return g.record(OpKind::kRope, {ix}, std::move(out),
                  [ix, group, positions = std::move(positions)](Graph& g, std::size_t self) {
                    // The adjoint of a rotation is the rotation by the negated angle.
                    rotate_rows(g.out_grad(self), *g.grad_buffer(ix), positions, group, -1.0);
                  });
}

}  // namespace interformer
