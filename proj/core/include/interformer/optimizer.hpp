#pragma once

#include <cstdint>

#include "interformer/params.hpp"

namespace interformer {

struct AdamOptions {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam with one moment pair per parameter tensor.
class Adam {
 public:
  Adam(const ParamStore& params, AdamOptions options = {});

  // Throws OptimizerError when `grads` does not match the parameter layout.
  void step(ParamStore& params, const ParamStore& grads);

  double lr() const noexcept { return options_.lr; }
  void set_lr(double lr) noexcept { options_.lr = lr; }
  std::uint64_t steps() const noexcept { return t_; }
  const ParamStore& first_moment() const noexcept { return m_; }
  const ParamStore& second_moment() const noexcept { return v_; }

 private:
  AdamOptions options_;
  ParamStore m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace interformer
