#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "interformer/trainer.hpp"

namespace interformer {

struct AblationRun {
  FlowMode mode = FlowMode::kInt;
  std::uint64_t seed = 0;
  TrainReport report;
};

// Mean best-epoch test metrics of one mode over its seeds.
struct ModeSummary {
  FlowMode mode = FlowMode::kInt;
  std::size_t runs = 0;
  Metrics mean;
  double auc_std = 0;  // sample standard deviation, 0 for a single run
};

struct AblationResult {
  std::uint32_t dataset_hash = 0;
  std::size_t examples = 0;
  std::vector<AblationRun> runs;  // mode-major, seeds in order

  std::vector<ModeSummary> summaries() const;  // in kAllModes order
  ModeSummary summary(FlowMode mode) const;
};

using RunCallback = std::function<void(const AblationRun&)>;

// Trains every mode in kAllModes on the same dataset with model/shuffle seeds
// base.seed, base.seed + 1, ... (`seeds` of them).
AblationResult run_ablation(const Dataset& data, const ModelConfig& model,
                            const TrainConfig& train_config, std::size_t seeds,
                            const RunCallback& on_run = {});

// One row per run: "mode,seed,epochs,best_epoch,loss,auc,gauc,ne".
std::string ablation_csv(const AblationResult& result);

// Header line with the dataset hash, then a fixed-width table of the five
// modes by loss/auc/gauc/ne.
std::string ablation_table(const AblationResult& result);

}  // namespace interformer
