#include "interformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fmt/format.h>

#include "interformer/csv.hpp"
#include "interformer/errors.hpp"

namespace interformer {

namespace {

constexpr char kMagic[4] = {'I', 'F', 'C', 'K'};

template <typename T>
void put(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw CorruptionError("checkpoint is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  KeyValues kv = to_key_values(model.config);
  kv.merge(to_key_values(model.schema));
  std::string text;
  for (const auto& [k, v] : kv) text += fmt::format("{}={}\n", k, v);
  put<std::uint64_t>(out, text.size());
  out += text;
  const auto& entries = model.params.entries();
  put<std::uint64_t>(out, entries.size());
  for (const auto& [name, t] : entries) {
    put<std::uint64_t>(out, name.size());
    out += name;
    put<std::uint64_t>(out, t.rows());
    put<std::uint64_t>(out, t.cols());
    for (double v : t.values()) put<double>(out, v);
  }
  put<std::uint32_t>(out, crc32(out));
  return out;
}

Model deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 + 4 + 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptionError("not a checkpoint (bad magic)");
  }
  const std::string_view body = bytes.substr(0, bytes.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 4);
  if (crc32(body) != stored) throw CorruptionError("checkpoint checksum mismatch");

  Reader in(body);
  in.take(4);
  const auto version = in.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw VersionError(fmt::format("checkpoint version {} is not supported (expected {})", version,
                                   kCheckpointVersion));
  }
  const auto text_len = in.get<std::uint64_t>();
  std::string_view text = in.take(text_len);
  KeyValues kv;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const auto line = text.substr(0, nl);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw CorruptionError("malformed configuration line");
    kv.emplace(line.substr(0, eq), line.substr(eq + 1));
    if (nl == std::string_view::npos) break;
    text.remove_prefix(nl + 1);
  }
  Model model;
  apply_key_values(model.config, kv);
  model.schema = schema_from_key_values(kv);
  if (!kv.empty()) {
    throw CorruptionError(fmt::format("unknown configuration key '{}'", kv.begin()->first));
  }

  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint64_t>();
    std::string name(in.take(name_len));
    const auto rows = in.get<std::uint64_t>();
    const auto cols = in.get<std::uint64_t>();
    if (cols != 0 && rows > in.remaining() / 8 / cols) {
      throw CorruptionError(fmt::format("tensor '{}' claims {}x{} values", name, rows, cols));
    }
    std::vector<double> values(rows * cols);
    for (double& v : values) v = in.get<double>();
    model.params.add(name, Tensor(rows, cols, std::move(values)));
  }
  if (in.remaining() != 0) throw CorruptionError("trailing bytes after the last tensor");
  check_layout(model.config, model.schema, model.params);
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::string bytes;
  try {
    bytes = read_file(path);
  } catch (const DataError& e) {
    throw CheckpointError(e.what());
  }
  return deserialize_checkpoint(bytes);
}

}  // namespace interformer
