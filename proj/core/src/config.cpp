#include "interformer/config.hpp"

#include <charconv>
#include <fmt/format.h>

#include "interformer/errors.hpp"

namespace interformer {

Backbone parse_backbone(std::string_view name) {
  if (name == "dot") return Backbone::kDot;
  if (name == "fm") return Backbone::kFm;
  if (name == "dcnv2" || name == "dcn") return Backbone::kDcnV2;
  if (name == "dhen") return Backbone::kDhen;
  throw ConfigError(fmt::format("unknown backbone '{}'", name));
}

std::string_view backbone_name(Backbone b) {
  switch (b) {
    case Backbone::kDot: return "dot";
    case Backbone::kFm: return "fm";
    case Backbone::kDcnV2: return "dcnv2";
    case Backbone::kDhen: return "dhen";
  }
  return "dhen";
}

FlowMode parse_mode(std::string_view name) {
  if (name == "sole") return FlowMode::kSole;
  if (name == "sep") return FlowMode::kSep;
  if (name == "n2s") return FlowMode::kN2S;
  if (name == "s2n") return FlowMode::kS2N;
  if (name == "int") return FlowMode::kInt;
  throw ConfigError(fmt::format("unknown mode '{}'", name));
}

std::string_view mode_name(FlowMode m) {
  switch (m) {
    case FlowMode::kSole: return "sole";
    case FlowMode::kSep: return "sep";
    case FlowMode::kN2S: return "n2s";
    case FlowMode::kS2N: return "s2n";
    case FlowMode::kInt: return "int";
  }
  return "int";
}

std::vector<std::size_t> ModelConfig::scaled_head_sizes() const {
  std::vector<std::size_t> out;
  for (std::size_t s : head_sizes) out.push_back(std::max<std::size_t>(1, s / head_scale));
  return out;
}

void ModelConfig::validate(std::size_t nonseq_tokens) const {
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  if (heads < 1 || embedding_dim % heads != 0) {
    throw ConfigError(fmt::format("heads={} must divide embedding_dim={}", heads, embedding_dim));
  }
  if (mode != FlowMode::kSole && head_dim() % 2 != 0) {
    throw ConfigError(fmt::format("rotary embeddings need an even head dim, got {}", head_dim()));
  }
  if (summary_tokens < 1 || summary_tokens >= nonseq_tokens) {
    throw ConfigError(fmt::format("summary_tokens={} must be in [1, {})", summary_tokens,
                                  nonseq_tokens));
  }
  if (cls_tokens != 0 && cls_tokens != summary_tokens) {
    throw ConfigError(fmt::format(
        "cls_tokens={} must be 0 or equal summary_tokens={} (CLS tokens are the summary)",
        cls_tokens, summary_tokens));
  }
  if (seq_summary_tokens() < 1) throw ConfigError("sequence summary has no tokens");
  if (head_scale < 1) throw ConfigError("head_scale must be >= 1");
  if (fm_rank < 1 || dcn_layers < 1 || dcn_rank < 1 || dhen_layers < 1 ||
      interaction_hidden < 1 || pffn_hidden < 1) {
    throw ConfigError("interaction/pffn sizes must be >= 1");
  }
  if (!(norm_eps > 0)) throw ConfigError("norm_eps must be positive");
}

std::string join_sizes(const std::vector<std::size_t>& sizes) {
  std::string out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(sizes[i]);
  }
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, text));
  }
  return v;
}

double parse_real(std::string_view key, std::string_view text) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(fmt::format("{}: '{}' is not a number", key, text));
  }
  return v;
}

std::vector<std::size_t> parse_sizes(std::string_view text) {
  std::vector<std::size_t> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_count("sizes", text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

KeyValues to_key_values(const ModelConfig& c) {
  KeyValues kv;
  kv["layers"] = std::to_string(c.layers);
  kv["embedding_dim"] = std::to_string(c.embedding_dim);
  kv["backbone"] = backbone_name(c.backbone);
  kv["mode"] = mode_name(c.mode);
  kv["heads"] = std::to_string(c.heads);
  kv["pffn_hidden"] = std::to_string(c.pffn_hidden);
  kv["cls_tokens"] = std::to_string(c.cls_tokens);
  kv["pma_tokens"] = std::to_string(c.pma_tokens);
  kv["recent_tokens"] = std::to_string(c.recent_tokens);
  kv["summary_tokens"] = std::to_string(c.summary_tokens);
  kv["gate_activation"] = activation_name(c.gate_activation);
  kv["interaction_hidden"] = std::to_string(c.interaction_hidden);
  kv["fm_rank"] = std::to_string(c.fm_rank);
  kv["dcn_layers"] = std::to_string(c.dcn_layers);
  kv["dcn_rank"] = std::to_string(c.dcn_rank);
  kv["dhen_layers"] = std::to_string(c.dhen_layers);
  kv["head_sizes"] = join_sizes(c.head_sizes);
  kv["head_scale"] = std::to_string(c.head_scale);
  kv["activation"] = activation_name(c.activation);
  kv["norm_eps"] = fmt::format("{}", c.norm_eps);
  return kv;
}

void apply_key_values(ModelConfig& c, KeyValues& kv) {
  auto take = [&](const char* key, auto&& apply) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    apply(it->second);
    kv.erase(it);
  };
  auto count = [&](const char* key, std::size_t& field) {
    take(key, [&](const std::string& v) { field = parse_count(key, v); });
  };
  count("layers", c.layers);
  count("embedding_dim", c.embedding_dim);
  take("backbone", [&](const std::string& v) { c.backbone = parse_backbone(v); });
  take("mode", [&](const std::string& v) { c.mode = parse_mode(v); });
  count("heads", c.heads);
  count("pffn_hidden", c.pffn_hidden);
  count("cls_tokens", c.cls_tokens);
  count("pma_tokens", c.pma_tokens);
  count("recent_tokens", c.recent_tokens);
  count("summary_tokens", c.summary_tokens);
  take("gate_activation", [&](const std::string& v) { c.gate_activation = parse_activation(v); });
  count("interaction_hidden", c.interaction_hidden);
  count("fm_rank", c.fm_rank);
  count("dcn_layers", c.dcn_layers);
  count("dcn_rank", c.dcn_rank);
  count("dhen_layers", c.dhen_layers);
  take("head_sizes", [&](const std::string& v) { c.head_sizes = parse_sizes(v); });
  count("head_scale", c.head_scale);
  take("activation", [&](const std::string& v) { c.activation = parse_activation(v); });
  take("norm_eps", [&](const std::string& v) { c.norm_eps = parse_real("norm_eps", v); });
}

}  // namespace interformer
