#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "interformer/config.hpp"
#include "interformer/synthetic.hpp"
#include "interformer/trainer.hpp"

namespace interformer::cli {

// Everything one invocation needs. Every key has a default; the flat
// key = value form is what config files, flags and config.snapshot use.
struct RunConfig {
  std::string out = "runs/latest";
  std::string data;  // CSV path; empty means generate synthetic data
  std::uint64_t seed = 0;
  bool strict = false;  // fail on the first malformed CSV row instead of skipping it
  std::size_t ablate_seeds = 3;
  std::size_t gradcheck_seeds = 3;
  SyntheticConfig synthetic;
  ModelConfig model;
  TrainConfig train;
};

KeyValues to_key_values(const RunConfig& config);
// Throws ConfigError for an unknown key or a malformed value.
RunConfig run_config_from(KeyValues kv);

// "key = value" lines, sorted by key.
std::string format_key_values(const KeyValues& kv);
KeyValues parse_key_values(std::string_view text);

// metrics.csv -> one TSV row per epoch with train and test columns.
std::string render_epoch_curves(std::string_view metrics_csv);
// ablation.csv -> one TSV row per mode with mean metrics over seeds.
std::string render_ablation_bars(std::string_view ablation_csv);

// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace interformer::cli
