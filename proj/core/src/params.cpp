#include "interformer/params.hpp"

#include <cmath>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

Tensor& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ConfigError(fmt::format("duplicate parameter '{}'", name));
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, std::move(init));
  return entries_.back().second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw AssemblyError(fmt::format("missing parameter '{}'", name));
  return entries_[it->second].second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw AssemblyError(fmt::format("missing parameter '{}'", name));
  return entries_[it->second].second;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor(t.rows(), t.cols()));
  return out;
}

Var ParamBinding::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = graph_.leaf(store_.get(name), requires_grad_);
  bound_.emplace(name, v);
  return v;
}

void ParamBinding::bind(const std::string& name, Var v) {
  const Tensor& t = store_.get(name);
  if (!t.same_shape(v.value())) {
    throw AssemblyError(fmt::format("cannot bind {} to parameter '{}' {}", v.value().shape_string(),
                                    name, t.shape_string()));
  }
  bound_.insert_or_assign(name, v);
}

ParamStore ParamBinding::gradients() const {
  ParamStore out;
  for (const auto& [name, t] : store_.entries()) {
    auto it = bound_.find(name);
    out.add(name, it == bound_.end() ? Tensor(t.rows(), t.cols()) : graph_.grad(it->second));
  }
  return out;
}

Tensor uniform_tensor(Rng& rng, std::size_t rows, std::size_t cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = dist(rng);
  return t;
}

Tensor glorot_tensor(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return uniform_tensor(rng, fan_in, fan_out, bound);
}

void add_linear(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t in,
                std::size_t out, bool bias) {
  store.add(prefix + ".W", glorot_tensor(rng, in, out));
  if (bias) store.add(prefix + ".b", Tensor(1, out));
}

Var linear(ParamBinding& params, const std::string& prefix, Var x) {
  Var y = matmul(x, params(prefix + ".W"));
  const std::string bias = prefix + ".b";
  if (params.has(bias)) y = add_row_broadcast(y, params(bias));
  return y;
}

void add_mlp(ParamStore& store, Rng& rng, const std::string& prefix,
             const std::vector<std::size_t>& sizes) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least input and output sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
    add_linear(store, rng, fmt::format("{}.{}", prefix, i), sizes[i], sizes[i + 1]);
}

Var mlp(ParamBinding& params, const std::string& prefix, Var x, std::size_t layers,
        Activation act) {
  for (std::size_t i = 0; i < layers; ++i) {
    x = linear(params, fmt::format("{}.{}", prefix, i), x);
    if (i + 1 < layers) x = activation(x, act);
  }
  return x;
}

}  // namespace interformer
