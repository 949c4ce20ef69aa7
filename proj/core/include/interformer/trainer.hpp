#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "interformer/config.hpp"
#include "interformer/features.hpp"
#include "interformer/metrics.hpp"
#include "interformer/model.hpp"

namespace interformer {

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t eval_batch_size = 1024;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double lr = 1e-2;
  double lr_decay = 0.5;  // applied after every epoch without a new best test AUC
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

KeyValues to_key_values(const TrainConfig& config);
void apply_key_values(TrainConfig& config, KeyValues& kv);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0;          // rate used during this epoch
  Metrics train;          // from the predictions made while training
  Metrics test;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::string stop_reason;  // "early_stop" or "max_epochs"
  double train_ctr = 0;

  const EpochRecord& best() const { return epochs.at(best_epoch - 1); }
};

struct TrainResult {
  Model model;  // parameters of the best epoch
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Throws DataError when a split is empty or the train CTR is degenerate.
TrainResult train(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct Predictions {
  std::vector<double> probs;
  std::vector<int> labels;
  std::vector<std::int64_t> users;
};

// Forward passes in fixed-size chunks; an example's prediction does not
// depend on which other examples share its chunk.
Predictions predict(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
                    std::size_t batch_size);

Metrics evaluate(const Model& model, const Dataset& data, Split split, std::size_t batch_size,
                 double train_ctr);

// "epoch,split,loss,auc,gauc,ne" with one train and one test row per epoch.
std::string metrics_csv(const TrainReport& report);

}  // namespace interformer
