#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "interformer/tensor.hpp"

namespace interformer {

enum class OpKind : std::uint8_t {
  kLeaf,
  kConstant,
  kMatMul,
  kBatchedMatMul,
  kMixBlocks,
  kElementwise,
  kScale,
  kAddRowBroadcast,
  kActivation,
  kSoftmax,
  kLayerNorm,
  kReduce,
  kReshape,
  kTranspose,
  kSliceCols,
  kConcatCols,
  kConcatBlocks,
  kGatherRows,
  kRope,
  kLog,
  kClamp,
};

std::string_view op_name(OpKind kind);

class Graph;

// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Tape of operations recorded in insertion order. Inputs always precede the
// node that consumes them, so reverse insertion order is a valid topological
// order for the backward sweep.
//
// One graph is single-writer. Separate graphs may read the same parameter
// tensors concurrently because gradients live in the graph, not in the
// parameters.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);

  // Records an op output. `fn` runs during backward only if some input
  // requires a gradient.
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return value(v.id()); }
  OpKind kind(Var v) const { return nodes_[v.id()].kind; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Computes d(loss)/d(node) for every node that requires a gradient. Each call
  // starts from zeroed gradients, so repeated calls give identical results.
  void backward(Var loss);
  void zero_grad();

  // Gradient of `v` from the last backward; zeros if `v` was not reached.
  Tensor grad(Var v) const;

  // Used by backward closures.
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor* grad_buffer(std::size_t id);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }

// ---------------------------------------------------------------------------
// Differentiable operations. Shapes are never broadcast implicitly; each op
// validates its operands and throws DimensionError naming both shapes.

Var matmul(Var a, Var b);

enum class Elementwise : std::uint8_t { kAdd, kSub, kHadamard };
Var elementwise(Var a, Var b, Elementwise kind);
inline Var add(Var a, Var b) { return elementwise(a, b, Elementwise::kAdd); }
inline Var sub(Var a, Var b) { return elementwise(a, b, Elementwise::kSub); }
inline Var hadamard(Var a, Var b) { return elementwise(a, b, Elementwise::kHadamard); }

Var scale(Var a, double factor);
// Adds the 1 x cols row vector `row` to every row of `a`.
Var add_row_broadcast(Var a, Var row);

enum class Activation : std::uint8_t { kSigmoid, kTanh, kRelu, kSwish, kIdentity };
Var activation(Var x, Activation kind);
double activate(double x, Activation kind);
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation kind);

Var softmax_rows(Var x);
// Row softmax over entries whose mask byte is nonzero; masked entries get an
// exact zero weight. Throws DegenerateAttentionError when a row has no valid
// entry. `valid` has one byte per element of x.
Var masked_softmax_rows(Var x, std::vector<std::uint8_t> valid);

// Normalizes each row to zero mean / unit variance, then applies the 1 x cols
// affine parameters.
Var layer_norm(Var x, Var gamma, Var beta, double eps);

Var sum(Var x);   // 1x1
Var mean(Var x);  // 1x1
Var row_sum(Var x);  // rows x 1

Var log(Var x);
// Clamps into [lo, hi]; gradient is zero where clamping is active.
Var clamp(Var x, double lo, double hi);

Var reshape(Var x, std::size_t rows, std::size_t cols);
Var transpose(Var x);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);

// Batched token layout: a tensor with batch * tokens rows stores `batch`
// consecutive blocks of `tokens` rows each, one block per example.
struct Block {
  Var var;
  std::size_t tokens;
};
// Concatenates per-example blocks: example b of the result is the rows of
// parts[0] block b, then parts[1] block b, ...
Var concat_blocks(std::span<const Block> parts, std::size_t batch);

// Row gather; an index of -1 yields a zero row.
Var gather_rows(Var x, std::vector<std::ptrdiff_t> index);

// Per-example product: block b of `a` (p x q) times block b of `b` (q x r),
// or times the transpose of block b of `b` (r x q) when `transpose_b`.
Var batched_matmul(Var a, Var b, std::size_t batch, bool transpose_b);

// Mixes the token rows of each example: block b of the output is
// mixᵀ · (block b of x), where x has batch * N rows and mix is N x M.
Var mix_blocks(Var x, Var mix, std::size_t batch);

// Rotary position embedding on each row. Columns are split into groups of
// `group` (a head), and within a group pair (2i, 2i+1) is rotated by
// positions[row] * 10000^(-2i/group).
Var rope(Var x, std::vector<double> positions, std::size_t group);

}  // namespace interformer
