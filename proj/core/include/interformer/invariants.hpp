#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace interformer {

struct InvariantResult {
  std::string name;
  bool passed = false;
  std::string detail;  // measured value or the first violation
};

// Randomized property checks across every module: softmax normalization,
// associativity, backward repeatability, rope isometry and relative offsets,
// attention masking, gating transparency, summary arity, DCN identity,
// shape preservation, mode gradient flow, batch-order invariance, parameter
// count, and checkpoint/CSV roundtrips.
std::vector<InvariantResult> run_invariant_suite(std::uint64_t seed);

}  // namespace interformer
