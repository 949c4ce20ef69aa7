#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "interformer/features.hpp"

namespace interformer {

// Header: label,user_id,dense_0..dense_{m-1},sparse_<name>...,seq_<name>...[,split]
// Sequence cells hold `|`-joined item indices, oldest first. The optional
// split column holds "train" or "test"; without it every 20th-row block of
// three (rows 0-2 of each 20) goes to test.
struct LoadReport {
  std::size_t loaded = 0;
  std::size_t bad_rows = 0;
  std::vector<std::string> problems;  // one message per bad row, with its line number
};

// Non-strict mode skips malformed rows and records them in `report`; strict
// mode throws ParseError (bad cell) or IngestionError (index outside the
// vocabulary) on the first one. A missing or misnamed column is always a
// SchemaError.
Dataset parse_csv(std::string_view text, const FeatureSchema& schema, LoadReport* report = nullptr,
                  bool strict = false);
Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema,
                 LoadReport* report = nullptr, bool strict = false);

std::string to_csv(const Dataset& data);
void save_csv(const Dataset& data, const std::filesystem::path& path);

std::uint32_t crc32(std::string_view bytes);
// CRC-32 of the dataset's canonical CSV text.
std::uint32_t dataset_fingerprint(const Dataset& data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace interformer
