#include "interformer/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace interformer {

namespace {

Var scalarize(Graph& g, Var out, const Tensor& weights) {
  if (out.rows() == 1 && out.cols() == 1) return out;
  return sum(hadamard(out, g.constant(weights)));
}

double evaluate(const std::vector<Tensor>& inputs, const GraphFunction& fn,
                const Tensor* weights) {
  Graph g;
  std::vector<Var> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t, false));
  Var out = fn(g, leaves);
  if (out.rows() == 1 && out.cols() == 1) return out.value()[0];
  return scalarize(g, out, *weights).value()[0];
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const std::vector<Tensor>& inputs,
                                const GraphFunction& fn, const GradCheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);

  Graph g;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t, true));
  Var out = fn(g, leaves);
  Tensor weights(out.rows(), out.cols());
  for (double& w : weights.values()) w = uni(rng);
  Var loss = scalarize(g, out, weights);
  g.backward(loss);

  GradCheckResult result{name, 0.0, 0, true};
  std::vector<Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = g.grad(leaves[i]);
    std::vector<std::size_t> entries(inputs[i].size());
    std::iota(entries.begin(), entries.end(), 0);
    if (options.max_entries_per_input != 0 && entries.size() > options.max_entries_per_input) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(options.max_entries_per_input);
    }
    for (std::size_t e : entries) {
      const double orig = probe[i][e];
      probe[i][e] = orig + options.step;
      const double plus = evaluate(probe, fn, &weights);
      probe[i][e] = orig - options.step;
      const double minus = evaluate(probe, fn, &weights);
      probe[i][e] = orig;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double denom =
          std::max({std::abs(analytic[e]), std::abs(numeric), options.denominator_floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic[e] - numeric) / denom);
      ++result.entries_checked;
    }
  }
  result.passed = result.max_rel_error < options.tolerance;
  return result;
}

}  // namespace interformer
