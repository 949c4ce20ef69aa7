#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "interformer/autograd.hpp"

namespace interformer {

using Rng = std::mt19937_64;

// Named parameter tensors in registration order. The order is part of the
// checkpoint format and of optimizer state layout.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor init);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const noexcept;
  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() noexcept { return entries_; }

  // Same names and shapes, all zero.
  ParamStore zeros_like() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binds parameters into one graph as leaves, created on first use.
class ParamBinding {
 public:
  ParamBinding(Graph& graph, const ParamStore& store, bool requires_grad = true)
      : graph_(graph), store_(store), requires_grad_(requires_grad) {}

  Var operator()(const std::string& name);
  // Uses an existing node for `name` instead of a fresh leaf.
  void bind(const std::string& name, Var v);
  bool has(const std::string& name) const { return store_.contains(name); }
  Graph& graph() const { return graph_; }
  const ParamStore& store() const { return store_; }

  // Gradients of every stored parameter after graph().backward(); parameters
  // that were never bound get zeros.
  ParamStore gradients() const;

 private:
  Graph& graph_;
  const ParamStore& store_;
  bool requires_grad_;
  std::unordered_map<std::string, Var> bound_;
};

Tensor uniform_tensor(Rng& rng, std::size_t rows, std::size_t cols, double bound);
// Glorot-uniform for a fan_in x fan_out weight.
Tensor glorot_tensor(Rng& rng, std::size_t fan_in, std::size_t fan_out);

// Dense layer y = x W + b stored as "<prefix>.W" (in x out) and "<prefix>.b" (1 x out).
void add_linear(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t in,
                std::size_t out, bool bias = true);
Var linear(ParamBinding& params, const std::string& prefix, Var x);

// Stack of linear layers "<prefix>.0", "<prefix>.1", ... with `act` between
// layers (not after the last).
void add_mlp(ParamStore& store, Rng& rng, const std::string& prefix,
             const std::vector<std::size_t>& sizes);
Var mlp(ParamBinding& params, const std::string& prefix, Var x, std::size_t layers,
        Activation act);

}  // namespace interformer
