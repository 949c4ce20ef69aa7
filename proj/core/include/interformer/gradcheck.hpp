#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "interformer/autograd.hpp"

namespace interformer {

struct GradCheckOptions {
  double step = 1e-5;        // central-difference step
  double tolerance = 1e-4;   // max relative error
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  // The floor keeps entries whose true gradient is ~0 from dividing round-off
  // by round-off.
  double denominator_floor = 1e-3;
  // Entries probed per input tensor; 0 probes all of them.
  std::size_t max_entries_per_input = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

// Builds the function under test on a fresh graph from leaves holding
// `inputs`. A non-scalar output is reduced to a scalar with fixed random
// weights so that every output entry contributes.
using GraphFunction = std::function<Var(Graph&, std::span<const Var> inputs)>;

GradCheckResult check_gradients(const std::string& name, const std::vector<Tensor>& inputs,
                                const GraphFunction& fn, const GradCheckOptions& options = {});

}  // namespace interformer
