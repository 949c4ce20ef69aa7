#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "interformer/ablation.hpp"
#include "interformer/checkpoint.hpp"
#include "interformer/csv.hpp"
#include "interformer/errors.hpp"
#include "interformer/gradsuite.hpp"
#include "interformer/invariants.hpp"

namespace interformer::cli {

namespace fs = std::filesystem;

KeyValues to_key_values(const RunConfig& c) {
  KeyValues kv = to_key_values(c.model);
  kv.merge(to_key_values(c.synthetic));
  KeyValues train = to_key_values(c.train);
  train.erase("seed");
  kv.merge(train);
  kv["out"] = c.out;
  kv["data"] = c.data;
  kv["seed"] = std::to_string(c.seed);
  kv["strict"] = c.strict ? "true" : "false";
  kv["ablate_seeds"] = std::to_string(c.ablate_seeds);
  kv["gradcheck_seeds"] = std::to_string(c.gradcheck_seeds);
  return kv;
}

RunConfig run_config_from(KeyValues kv) {
  RunConfig c;
  apply_key_values(c.model, kv);
  apply_key_values(c.synthetic, kv);
  auto take = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  // one seed drives data, init and shuffling; keep it away from the train keys
  if (auto v = take("seed")) c.seed = parse_count("seed", *v);
  apply_key_values(c.train, kv);
  if (auto v = take("out")) c.out = *v;
  if (auto v = take("data")) c.data = *v;
  if (auto v = take("strict")) {
    if (*v != "true" && *v != "false") throw ConfigError(fmt::format("strict: expected true or false, got '{}'", *v));
    c.strict = *v == "true";
  }
  if (auto v = take("ablate_seeds")) c.ablate_seeds = parse_count("ablate_seeds", *v);
  if (auto v = take("gradcheck_seeds")) c.gradcheck_seeds = parse_count("gradcheck_seeds", *v);
  if (!kv.empty()) throw ConfigError(fmt::format("unknown configuration key '{}'", kv.begin()->first));
  if (c.out.empty()) throw ConfigError("out must not be empty");
  c.train.seed = c.seed;
  c.synthetic.embedding_dim = c.model.embedding_dim;
  return c;
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += fmt::format("{} = {}\n", k, v);
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  for (auto line : split(text, '\n')) {
    line = trim(line);
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t n = 0;
  for (auto line : split(text, '\n')) {
    ++n;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", n);
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

std::string render_epoch_curves(std::string_view metrics_csv) {
  const auto lines = lines_of(metrics_csv);
  if (lines.empty() || lines.front() != "epoch,split,loss,auc,gauc,ne") {
    throw DataError("not a metrics log (expected header epoch,split,loss,auc,gauc,ne)");
  }
  std::map<std::size_t, std::map<std::string, std::vector<std::string_view>>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 6) throw ParseError("metrics row needs 6 fields", i + 1);
    rows[parse_count("epoch", f[0])][std::string(f[1])] = {f.begin() + 2, f.end()};
  }
  std::string out =
      "epoch\ttrain_loss\ttrain_auc\ttrain_gauc\ttrain_ne\ttest_loss\ttest_auc\ttest_gauc\ttest_ne\n";
  for (const auto& [epoch, splits] : rows) {
    out += std::to_string(epoch);
    for (const char* s : {"train", "test"}) {
      auto it = splits.find(s);
      if (it == splits.end()) throw DataError(fmt::format("epoch {} has no {} row", epoch, s));
      for (auto v : it->second) out += fmt::format("\t{}", v);
    }
    out += '\n';
  }
  return out;
}

std::string render_ablation_bars(std::string_view ablation_csv) {
  const auto lines = lines_of(ablation_csv);
  if (lines.empty() || lines.front() != "mode,seed,epochs,best_epoch,loss,auc,gauc,ne") {
    throw DataError("not an ablation log (expected header mode,seed,epochs,best_epoch,...)");
  }
  struct Acc {
    std::vector<double> loss, auc, gauc, ne;
  };
  std::vector<std::string> order;
  std::map<std::string, Acc> acc;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto f = split(lines[i], ',');
    if (f.size() != 8) throw ParseError("ablation row needs 8 fields", i + 1);
    const std::string mode(f[0]);
    if (!acc.count(mode)) order.push_back(mode);
    Acc& a = acc[mode];
    a.loss.push_back(parse_real("loss", f[4]));
    a.auc.push_back(parse_real("auc", f[5]));
    a.gauc.push_back(parse_real("gauc", f[6]));
    a.ne.push_back(parse_real("ne", f[7]));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto stdev = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
  };
  std::string out = "mode\truns\tloss\tauc\tauc_std\tgauc\tne\n";
  for (const auto& mode : order) {
    const Acc& a = acc[mode];
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\n", mode, a.auc.size(), mean(a.loss),
                       mean(a.auc), stdev(a.auc), mean(a.gauc), mean(a.ne));
  }
  return out;
}

namespace {

struct Context {
  RunConfig config;
  std::ostream& out;
  std::ostream& err;
  fs::path out_dir() const { return config.out; }
};

void write_snapshot(const Context& ctx) {
  fs::create_directories(ctx.out_dir());
  write_file(ctx.out_dir() / "config.snapshot", format_key_values(to_key_values(ctx.config)));
}

Dataset load_dataset(const Context& ctx) {
  const RunConfig& c = ctx.config;
  if (c.data.empty()) return generate_synthetic(c.synthetic, c.seed);
  const fs::path schema_path = c.data + ".schema";
  if (!fs::exists(schema_path)) {
    throw DataError(fmt::format("{} has no schema file {}", c.data, schema_path.string()));
  }
  KeyValues kv = parse_key_values(read_file(schema_path));
  FeatureSchema schema = schema_from_key_values(kv);
  if (!kv.empty()) throw SchemaError(fmt::format("unknown schema key '{}'", kv.begin()->first));
  schema.embedding_dim = c.model.embedding_dim;
  LoadReport report;
  Dataset data = load_csv(c.data, schema, &report, c.strict);
  for (const auto& p : report.problems) fmt::print(ctx.err, "warning: {}\n", p);
  if (report.bad_rows > 0) {
    fmt::print(ctx.err, "warning: skipped {} malformed rows of {}\n", report.bad_rows, c.data);
  }
  return data;
}

void print_metrics(std::ostream& os, const Metrics& m) {
  fmt::print(os, "loss {}\nauc {}\ngauc {}\nne {}\n", m.loss, m.auc, m.gauc, m.ne);
}

int gen_data(const Context& ctx) {
  const Dataset data = generate_synthetic(ctx.config.synthetic, ctx.config.seed);
  const fs::path path = ctx.config.data.empty() ? ctx.out_dir() / "data.csv" : fs::path(ctx.config.data);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_csv(data, path);
  write_file(path.string() + ".schema", format_key_values(to_key_values(data.schema)));
  fmt::print(ctx.out, "wrote {} examples ({} test, train ctr {:.4f}) to {}; dataset {:08x}\n",
             data.records.size(), data.indices(Split::kTest).size(), data.background_ctr(),
             path.string(), dataset_fingerprint(data));
  return 0;
}

int train_command(const Context& ctx) {
  const Dataset data = load_dataset(ctx);
  write_snapshot(ctx);
  const TrainResult result =
      train(data, ctx.config.model, ctx.config.train, [&](const EpochRecord& e) {
        fmt::print(ctx.out, "epoch {:>3}  lr {:.3g}  train auc {:.4f}  test auc {:.4f}  test loss {:.4f}\n",
                   e.epoch, e.lr, e.train.auc, e.test.auc, e.test.loss);
        ctx.out.flush();
      });
  const std::string metrics = metrics_csv(result.report);
  save_checkpoint(result.model, ctx.out_dir() / "model.ifck");
  write_file(ctx.out_dir() / "metrics.csv", metrics);
  write_file(ctx.out_dir() / "report.tsv", render_epoch_curves(metrics));
  fmt::print(ctx.out, "best epoch {} of {} ({}); test metrics:\n", result.report.best_epoch,
             result.report.epochs.size(), result.report.stop_reason);
  print_metrics(ctx.out, result.report.best().test);
  return 0;
}

int eval_command(const Context& ctx, const std::string& checkpoint) {
  const fs::path path = checkpoint.empty() ? ctx.out_dir() / "model.ifck" : fs::path(checkpoint);
  const Model model = load_checkpoint(path);
  const Dataset data = load_dataset(ctx);
  if (!(model.schema == data.schema)) {
    throw SchemaError(fmt::format("{} was trained on a different feature schema", path.string()));
  }
  print_metrics(ctx.out, evaluate(model, data, Split::kTest, ctx.config.train.eval_batch_size,
                                  data.background_ctr()));
  return 0;
}

int ablate_command(const Context& ctx) {
  const Dataset data = load_dataset(ctx);
  write_snapshot(ctx);
  const AblationResult result =
      run_ablation(data, ctx.config.model, ctx.config.train, ctx.config.ablate_seeds,
                   [&](const AblationRun& r) {
                     fmt::print(ctx.err, "{} seed {}: best epoch {}, test auc {:.4f}\n",
                                mode_name(r.mode), r.seed, r.report.best_epoch,
                                r.report.best().test.auc);
                   });
  const std::string runs = ablation_csv(result);
  write_file(ctx.out_dir() / "ablation.csv", runs);
  write_file(ctx.out_dir() / "report.tsv", render_ablation_bars(runs));
  ctx.out << ablation_table(result);
  return 0;
}

int gradcheck_command(const Context& ctx) {
  std::size_t checks = 0, failures = 0, invariants = 0;
  double worst = 0;
  for (std::uint64_t s = ctx.config.seed; s < ctx.config.seed + ctx.config.gradcheck_seeds; ++s) {
    for (const auto& r : run_gradient_suite(s)) {
      ++checks;
      worst = std::max(worst, r.max_rel_error);
      if (!r.passed) {
        ++failures;
        fmt::print(ctx.out, "FAIL seed {} gradient {}: max rel error {:.3g}\n", s, r.name,
                   r.max_rel_error);
      }
    }
    for (const auto& r : run_invariant_suite(s)) {
      ++invariants;
      if (!r.passed) {
        ++failures;
        fmt::print(ctx.out, "FAIL seed {} invariant {}: {}\n", s, r.name, r.detail);
      }
    }
  }
  fmt::print(ctx.out, "{} gradient checks (worst rel error {:.3g}), {} invariant checks, {} failed\n",
             checks, worst, invariants, failures);
  return failures == 0 ? 0 : 1;
}

int report_command(const Context& ctx, std::string input, std::string output) {
  if (input.empty()) {
    input = (ctx.out_dir() / "metrics.csv").string();
    if (!fs::exists(input)) input = (ctx.out_dir() / "ablation.csv").string();
  }
  if (output.empty()) output = (ctx.out_dir() / "report.tsv").string();
  const std::string text = read_file(input);
  const std::string tsv = text.starts_with("mode,") ? render_ablation_bars(text)
                                                     : render_epoch_curves(text);
  write_file(output, tsv);
  fmt::print(ctx.out, "wrote {}\n", output);
  return 0;
}

bool given_on_command_line(const std::vector<std::string>& args, std::string_view flag) {
  for (const auto& a : args) {
    if (a == flag || (a.starts_with(flag) && a.size() > flag.size() && a[flag.size()] == '=')) return true;
  }
  return false;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"InterFormer CTR models: synthetic data, training, evaluation, ablations", "interformer"};
  app.set_config("--config", "", "flat 'key = value' file; command-line flags win");
  app.get_config_formatter_base()->arrayDelimiter('\x1f');  // keep "1024,512" as one value
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  KeyValues values = to_key_values(RunConfig{});
  for (auto& [key, value] : values) {
    app.add_option("--" + key, value)->group("Run configuration")->type_name("VALUE")->capture_default_str();
  }

  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as CSV (+ .schema)");
  auto* trn = app.add_subcommand("train", "train a model; writes config.snapshot, model.ifck, metrics.csv, report.tsv");
  auto* evl = app.add_subcommand("eval", "print test loss/auc/gauc/ne of a checkpoint");
  auto* abl = app.add_subcommand("ablate", "train sole/sep/n2s/s2n/int on one dataset and compare");
  auto* grd = app.add_subcommand("gradcheck", "finite-difference and invariant suites; exit 1 on failure");
  auto* rep = app.add_subcommand("report", "render metrics.csv or ablation.csv as TSV");
  std::string checkpoint, input, output;
  evl->add_option("--checkpoint", checkpoint, "checkpoint path (default <out>/model.ifck)");
  rep->add_option("--input", input, "metrics.csv or ablation.csv (default from <out>)");
  rep->add_option("--output", output, "TSV path (default <out>/report.tsv)");
  for (auto* sub : {gen, trn, evl, abl, grd, rep}) sub->fallthrough();

  auto parse = [&](std::vector<std::string> argv) {
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  };
  const char* env = std::getenv("INTERFORMER_OUT");
  const bool env_out = env && *env && !given_on_command_line(args, "--out");
  try {
    parse(args);
    if (env_out) values["out"] = env;
    // eval defaults to the configuration its run directory was trained with
    if (evl->parsed() && app.get_option("--config")->count() == 0) {
      const fs::path snapshot = fs::path(values["out"]) / "config.snapshot";
      if (fs::exists(snapshot)) {
        std::vector<std::string> again = {"--config", snapshot.string()};
        again.insert(again.end(), args.begin(), args.end());
        const KeyValues defaults = to_key_values(RunConfig{});
        for (auto& [k, v] : values) v = defaults.at(k);
        app.clear();
        parse(again);
        if (env_out) values["out"] = env;
      }
    }
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  Context ctx{{}, out, err};
  try {
    ctx.config = run_config_from(values);
  } catch (const Error& e) {
    fmt::print(err, "error: {}\nRun with --help for more information.\n", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) return gen_data(ctx);
    if (trn->parsed()) return train_command(ctx);
    if (evl->parsed()) return eval_command(ctx, checkpoint);
    if (abl->parsed()) return ablate_command(ctx);
    if (grd->parsed()) return gradcheck_command(ctx);
    return report_command(ctx, input, output);
  } catch (const ConfigError& e) {
    fmt::print(err, "configuration error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return 1;
  }
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace interformer::cli
