#pragma once

#include <cstdint>
#include <vector>

#include "interformer/gradcheck.hpp"

namespace interformer {

// Finite-difference checks of every differentiable op, every arch-level
// function, and a one-layer `int` model end to end. Inputs are drawn from
// [-2, 2] (log and cross-entropy use positive domains) with the given seed.
std::vector<GradCheckResult> run_gradient_suite(std::uint64_t seed,
                                                const GradCheckOptions& options = {});

}  // namespace interformer
