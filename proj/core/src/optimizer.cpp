#include "interformer/optimizer.hpp"

#include <cmath>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

Adam::Adam(const ParamStore& params, AdamOptions options)
    : options_(options), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::step(ParamStore& params, const ParamStore& grads) {
  auto& p = params.entries();
  const auto& g = grads.entries();
  auto& m = m_.entries();
  auto& v = v_.entries();
  if (p.size() != m.size() || g.size() != m.size()) {
    throw OptimizerError(fmt::format("optimizer holds {} tensors, got {} parameters / {} gradients",
                                     m.size(), p.size(), g.size()));
  }
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].first != m[i].first || g[i].first != m[i].first ||
        !p[i].second.same_shape(m[i].second) || !g[i].second.same_shape(m[i].second)) {
      throw OptimizerError(fmt::format("tensor #{}: parameter '{}' {} / gradient '{}' {} vs state '{}' {}",
                                       i, p[i].first, p[i].second.shape_string(), g[i].first,
                                       g[i].second.shape_string(), m[i].first,
                                       m[i].second.shape_string()));
    }
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto pv = p[i].second.values();
    auto gv = g[i].second.values();
    auto mv = m[i].second.values();
    auto vv = v[i].second.values();
    for (std::size_t j = 0; j < pv.size(); ++j) {
      mv[j] = b1 * mv[j] + (1.0 - b1) * gv[j];
      vv[j] = b2 * vv[j] + (1.0 - b2) * gv[j] * gv[j];
      pv[j] -= options_.lr * (mv[j] / c1) / (std::sqrt(vv[j] / c2) + options_.eps);
    }
  }
}

}  // namespace interformer
