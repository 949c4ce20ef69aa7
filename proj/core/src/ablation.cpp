#include "interformer/ablation.hpp"

#include <cmath>
#include <fmt/format.h>

#include "interformer/csv.hpp"
#include "interformer/errors.hpp"

namespace interformer {

ModeSummary AblationResult::summary(FlowMode mode) const {
  ModeSummary s;
  s.mode = mode;
  std::vector<double> aucs;
  for (const auto& run : runs) {
    if (run.mode != mode) continue;
    const Metrics& m = run.report.best().test;
    s.mean.loss += m.loss;
    s.mean.auc += m.auc;
    s.mean.gauc += m.gauc;
    s.mean.ne += m.ne;
    aucs.push_back(m.auc);
  }
  s.runs = aucs.size();
  if (s.runs == 0) throw ContractError(fmt::format("no runs for mode {}", mode_name(mode)));
  const double n = static_cast<double>(s.runs);
  s.mean.loss /= n;
  s.mean.auc /= n;
  s.mean.gauc /= n;
  s.mean.ne /= n;
  if (s.runs > 1) {
    double ss = 0;
    for (double a : aucs) ss += (a - s.mean.auc) * (a - s.mean.auc);
    s.auc_std = std::sqrt(ss / (n - 1));
  }
  return s;
}

std::vector<ModeSummary> AblationResult::summaries() const {
  std::vector<ModeSummary> out;
  for (FlowMode m : kAllModes) out.push_back(summary(m));
  return out;
}

AblationResult run_ablation(const Dataset& data, const ModelConfig& model,
                            const TrainConfig& train_config, std::size_t seeds,
                            const RunCallback& on_run) {
  if (seeds < 1) throw ConfigError("ablation needs at least one seed");
  AblationResult result;
  result.dataset_hash = dataset_fingerprint(data);
  result.examples = data.records.size();
  for (FlowMode mode : kAllModes) {
    ModelConfig mc = model;
    mc.mode = mode;
    for (std::size_t i = 0; i < seeds; ++i) {
      TrainConfig tc = train_config;
      tc.seed = train_config.seed + i;
      AblationRun run{mode, tc.seed, train(data, mc, tc).report};
      if (on_run) on_run(run);
      result.runs.push_back(std::move(run));
    }
  }
  return result;
}

std::string ablation_csv(const AblationResult& result) {
  std::string out = "mode,seed,epochs,best_epoch,loss,auc,gauc,ne\n";
  for (const auto& run : result.runs) {
    const Metrics& m = run.report.best().test;
    out += fmt::format("{},{},{},{},{},{},{},{}\n", mode_name(run.mode), run.seed,
                       run.report.epochs.size(), run.report.best_epoch, m.loss, m.auc, m.gauc,
                       m.ne);
  }
  return out;
}

std::string ablation_table(const AblationResult& result) {
  const auto rows = result.summaries();
  std::string out = fmt::format("# dataset {:08x}  examples {}  seeds {}\n", result.dataset_hash,
                                result.examples, rows.front().runs);
  out += fmt::format("{:<6}{:>10}{:>10}{:>10}{:>10}\n", "mode", "loss", "auc", "gauc", "ne");
  for (const auto& r : rows) {
    out += fmt::format("{:<6}{:>10.4f}{:>10.4f}{:>10.4f}{:>10.4f}\n", mode_name(r.mode),
                       r.mean.loss, r.mean.auc, r.mean.gauc, r.mean.ne);
  }
  return out;
}

}  // namespace interformer
