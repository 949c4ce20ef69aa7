#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "fixtures.hpp"
#include "interformer/checkpoint.hpp"
#include "interformer/csv.hpp"
#include "interformer/errors.hpp"
#include "interformer/synthetic.hpp"

using namespace interformer;

namespace {

Model tiny(std::uint64_t seed, FlowMode mode = FlowMode::kInt) {
  ModelConfig c = fixture::tiny_model();
  c.mode = mode;
  return init_model(c, fixture::tiny_data().schema(), seed);
}

void reseal(std::string& bytes) {
  const std::uint32_t crc = crc32(std::string_view(bytes).substr(0, bytes.size() - 4));
  std::memcpy(bytes.data() + bytes.size() - 4, &crc, 4);
}

Tensor logits(const Model& m, const RawBatch& raw) {
  Graph g;
  ParamBinding p(g, m.params, false);
  return interformer_forward(m.config, m.schema, raw, p).logits.value();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const Dataset data = generate_synthetic(fixture::tiny_data(), 1);
  const std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
  const RawBatch raw = make_batch(data, idx);
  for (FlowMode mode : kAllModes) {
    const Model m = tiny(3, mode);
    const std::string bytes = serialize_checkpoint(m);
    const Model back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back.config, m.config);
    EXPECT_EQ(back.schema, m.schema);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
    EXPECT_EQ(logits(back, raw), logits(m, raw)) << mode_name(mode);
  }
}

TEST(Checkpoint, FileRoundTrip) {
  const Model m = tiny(4);
  const auto path = std::filesystem::temp_directory_path() / "interformer_ckpt_test.ifck";
  save_checkpoint(m, path);
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(m));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, AnyFlippedByteIsDetected) {
  const std::string bytes = serialize_checkpoint(tiny(5));
  for (std::size_t pos : {std::size_t{0}, std::size_t{5}, bytes.size() / 2, bytes.size() - 1}) {
    std::string bad = bytes;
    bad[pos] ^= 0x10;
    EXPECT_THROW(deserialize_checkpoint(bad), CorruptionError) << pos;
  }
}

TEST(Checkpoint, TruncationIsCorruption) {
  const std::string bytes = serialize_checkpoint(tiny(6));
  for (std::size_t len : {std::size_t{3}, std::size_t{20}, bytes.size() - 5}) {
    EXPECT_THROW(deserialize_checkpoint(std::string_view(bytes).substr(0, len)), CorruptionError)
        << len;
  }
  // resealed truncation still fails on structure
  std::string cut = bytes.substr(0, bytes.size() - 40);
  cut += "0000";
  reseal(cut);
  EXPECT_THROW(deserialize_checkpoint(cut), CorruptionError);
}

TEST(Checkpoint, UnknownVersionIsRejected) {
  std::string bytes = serialize_checkpoint(tiny(7));
  const std::uint32_t v = kCheckpointVersion + 1;
  std::memcpy(bytes.data() + 4, &v, 4);
  reseal(bytes);
  EXPECT_THROW(deserialize_checkpoint(bytes), VersionError);
}

TEST(Checkpoint, IncompatibleTensorsNameTheTensor) {
  Model m = tiny(8);
  m.config.layers = 3;
  try {
    deserialize_checkpoint(serialize_checkpoint(m));
    FAIL() << "loaded tensors that do not fit the configuration";
  } catch (const AssemblyError& e) {
    EXPECT_NE(std::string(e.what()).find("layer2"), std::string::npos) << e.what();
  }
}
