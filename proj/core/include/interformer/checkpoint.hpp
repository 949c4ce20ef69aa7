#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "interformer/model.hpp"

namespace interformer {

// Layout (all integers little-endian):
//   "IFCK" | u32 version | u64 n + n bytes of "key=value\n" lines (config and
//   schema) | u64 tensor count | per tensor: u64 name length, name, u64 rows,
//   u64 cols, rows*cols f64 | u32 CRC-32 of every preceding byte.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Model& model);
// Throws CorruptionError (bad magic, truncation, checksum), VersionError, or
// AssemblyError when the tensors do not fit the stored configuration.
Model deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace interformer
