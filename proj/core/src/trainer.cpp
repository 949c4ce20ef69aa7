#include "interformer/trainer.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <numeric>

#include "interformer/errors.hpp"
#include "interformer/optimizer.hpp"

namespace interformer {

void TrainConfig::validate() const {
  if (batch_size < 1 || eval_batch_size < 1) throw ConfigError("batch sizes must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(lr >= 0)) throw ConfigError(fmt::format("lr {} must be non-negative", lr));
  if (!(lr_decay > 0 && lr_decay <= 1)) throw ConfigError("lr_decay must lie in (0, 1]");
}

KeyValues to_key_values(const TrainConfig& c) {
  KeyValues kv;
  kv["batch_size"] = std::to_string(c.batch_size);
  kv["eval_batch_size"] = std::to_string(c.eval_batch_size);
  kv["max_epochs"] = std::to_string(c.max_epochs);
  kv["patience"] = std::to_string(c.patience);
  kv["lr"] = fmt::format("{}", c.lr);
  kv["lr_decay"] = fmt::format("{}", c.lr_decay);
  kv["seed"] = std::to_string(c.seed);
  return kv;
}

void apply_key_values(TrainConfig& c, KeyValues& kv) {
  auto take = [&](const char* key, auto&& apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    apply(it->second);
    kv.erase(it);
  };
  take("batch_size", [&](const std::string& v) { c.batch_size = parse_count("batch_size", v); });
  take("eval_batch_size",
       [&](const std::string& v) { c.eval_batch_size = parse_count("eval_batch_size", v); });
  take("max_epochs", [&](const std::string& v) { c.max_epochs = parse_count("max_epochs", v); });
  take("patience", [&](const std::string& v) { c.patience = parse_count("patience", v); });
  take("lr", [&](const std::string& v) { c.lr = parse_real("lr", v); });
  take("lr_decay", [&](const std::string& v) { c.lr_decay = parse_real("lr_decay", v); });
  take("seed", [&](const std::string& v) { c.seed = parse_count("seed", v); });
}

Predictions predict(const Model& model, const Dataset& data, std::span<const std::size_t> indices,
                    std::size_t batch_size) {
  Predictions out;
  for (std::size_t begin = 0; begin < indices.size(); begin += batch_size) {
    const auto chunk = indices.subspan(begin, std::min(batch_size, indices.size() - begin));
    const RawBatch raw = make_batch(data, chunk);
    Graph g;
    ParamBinding params(g, model.params, false);
    const ForwardOutput fwd = interformer_forward(model.config, model.schema, raw, params);
    for (double p : fwd.probs.value().values()) out.probs.push_back(p);
    out.labels.insert(out.labels.end(), raw.labels.begin(), raw.labels.end());
    out.users.insert(out.users.end(), raw.user_ids.begin(), raw.user_ids.end());
  }
  return out;
}

Metrics evaluate(const Model& model, const Dataset& data, Split split, std::size_t batch_size,
                 double train_ctr) {
  const auto idx = data.indices(split);
  if (idx.empty()) throw DataError("cannot evaluate an empty split");
  const Predictions p = predict(model, data, idx, batch_size);
  return compute_metrics(p.probs, p.labels, p.users, train_ctr);
}

TrainResult train(const Dataset& data, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  std::vector<std::size_t> train_idx = data.indices(Split::kTrain);
  const std::vector<std::size_t> test_idx = data.indices(Split::kTest);
  if (train_idx.empty() || test_idx.empty()) {
    throw DataError(fmt::format("training needs both splits (train {}, test {})",
                                train_idx.size(), test_idx.size()));
  }
  const double ctr = data.background_ctr();

  TrainResult result{init_model(model_config, data.schema, config.seed), {}};
  Model& model = result.model;
  TrainReport& report = result.report;
  report.train_ctr = ctr;
  Adam adam(model.params, {.lr = config.lr});
  Rng shuffle_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  ParamStore best_params = model.params;
  double best_auc = -1.0;
  std::size_t since_best = 0;
  report.stop_reason = "max_epochs";
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = adam.lr();
    std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
    Predictions seen;
    for (std::size_t begin = 0; begin < train_idx.size(); begin += config.batch_size) {
      const std::span<const std::size_t> chunk(
          train_idx.data() + begin, std::min(config.batch_size, train_idx.size() - begin));
      const RawBatch raw = make_batch(data, chunk);
      Graph g;
      ParamBinding params(g, model.params);
      const ForwardOutput fwd = interformer_forward(model.config, model.schema, raw, params);
      Var loss = cross_entropy(fwd.probs, raw.labels);
      g.backward(loss);
      adam.step(model.params, params.gradients());
      for (double p : fwd.probs.value().values()) seen.probs.push_back(p);
      seen.labels.insert(seen.labels.end(), raw.labels.begin(), raw.labels.end());
      seen.users.insert(seen.users.end(), raw.user_ids.begin(), raw.user_ids.end());
    }
    rec.train = compute_metrics(seen.probs, seen.labels, seen.users, ctr);
    const Predictions test = predict(model, data, test_idx, config.eval_batch_size);
    rec.test = compute_metrics(test.probs, test.labels, test.users, ctr);
    report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (rec.test.auc > best_auc) {
      best_auc = rec.test.auc;
      report.best_epoch = epoch;
      best_params = model.params;
      since_best = 0;
    } else {
      adam.set_lr(adam.lr() * config.lr_decay);
      if (++since_best >= config.patience) {
        report.stop_reason = "early_stop";
        break;
      }
    }
  }
  model.params = std::move(best_params);
  return result;
}

std::string metrics_csv(const TrainReport& report) {
  std::string out = "epoch,split,loss,auc,gauc,ne\n";
  auto row = [&](std::size_t epoch, const char* split, const Metrics& m) {
    out += fmt::format("{},{},{},{},{},{}\n", epoch, split, m.loss, m.auc, m.gauc, m.ne);
  };
  for (const auto& e : report.epochs) {
    row(e.epoch, "train", e.train);
    row(e.epoch, "test", e.test);
  }
  return out;
}

}  // namespace interformer
