#include "interformer/csv.hpp"

#include <boost/crc.hpp>
#include <charconv>
#include <fmt/format.h>
#include <fstream>
#include <sstream>

#include "interformer/errors.hpp"

namespace interformer {

namespace {

std::vector<std::string_view> split_view(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    const auto pos = text.find(sep);
    out.push_back(text.substr(0, pos));
    if (pos == std::string_view::npos) break;
    text.remove_prefix(pos + 1);
  }
  return out;
}

std::vector<std::string> expected_header(const FeatureSchema& schema) {
  std::vector<std::string> cols = {"label", "user_id"};
  for (std::size_t i = 0; i < schema.dense_count; ++i) cols.push_back(fmt::format("dense_{}", i));
  for (const auto& s : schema.sparse) cols.push_back("sparse_" + s.name);
  for (const auto& s : schema.sequences) cols.push_back("seq_" + s.name);
  return cols;
}

template <typename T>
T parse_cell(std::string_view cell, std::size_t line, std::string_view column) {
  T v{};
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ParseError(fmt::format("line {}: column '{}': '{}' is not a number", line, column, cell),
                     line);
  }
  return v;
}

std::int64_t parse_index(std::string_view cell, std::size_t line, std::string_view column,
                         std::size_t vocab) {
  const auto v = parse_cell<std::int64_t>(cell, line, column);
  if (v < 0 || static_cast<std::size_t>(v) >= vocab) {
    throw IngestionError(fmt::format("line {}: feature '{}' index {} outside vocabulary of {}", line,
                                     column, v, vocab));
  }
  return v;
}

Record parse_row(std::string_view row, std::size_t line, const FeatureSchema& schema,
                 const std::vector<std::string>& header, bool has_split,
                 std::size_t data_row) {
  const auto cells = split_view(row, ',');
  const std::size_t want = header.size() + (has_split ? 1 : 0);
  if (cells.size() != want) {
    throw ParseError(fmt::format("line {}: {} cells, expected {}", line, cells.size(), want), line);
  }
  Record r;
  std::size_t c = 0;
  r.label = parse_cell<int>(cells[c], line, header[c]);
  if (r.label != 0 && r.label != 1) {
    throw ParseError(fmt::format("line {}: label {} is not 0 or 1", line, r.label), line);
  }
  ++c;
  r.user_id = parse_cell<std::int64_t>(cells[c], line, header[c]);
  ++c;
  for (std::size_t i = 0; i < schema.dense_count; ++i, ++c) {
    r.dense.push_back(parse_cell<double>(cells[c], line, header[c]));
  }
  for (const auto& s : schema.sparse) {
    r.sparse.push_back(parse_index(cells[c], line, header[c], s.vocab));
    ++c;
  }
  for (const auto& s : schema.sequences) {
    std::vector<std::int64_t> seq;
    if (!cells[c].empty()) {
      for (auto item : split_view(cells[c], '|')) seq.push_back(parse_index(item, line, header[c], s.vocab));
    }
    if (seq.size() > s.max_length) seq.erase(seq.begin(), seq.end() - s.max_length);
    r.sequences.push_back(std::move(seq));
    ++c;
  }
  if (has_split) {
    if (cells[c] == "train") {
      r.split = Split::kTrain;
    } else if (cells[c] == "test") {
      r.split = Split::kTest;
    } else {
      throw ParseError(fmt::format("line {}: split '{}' is not train/test", line, cells[c]), line);
    }
  } else {
    r.split = data_row % 20 < 3 ? Split::kTest : Split::kTrain;
  }
  return r;
}

}  // namespace

Dataset parse_csv(std::string_view text, const FeatureSchema& schema, LoadReport* report,
                  bool strict) {
  schema.validate();
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = {};
  auto lines = split_view(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw SchemaError("CSV has no header row");

  const auto header = expected_header(schema);
  std::string_view head_line = lines[0];
  if (!head_line.empty() && head_line.back() == '\r') head_line.remove_suffix(1);
  const auto got = split_view(head_line, ',');
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i >= got.size() || got[i] != header[i]) {
      throw SchemaError(fmt::format("CSV column {} should be '{}', found '{}'", i, header[i],
                                    i < got.size() ? std::string(got[i]) : std::string("<none>")));
    }
  }
  const bool has_split = got.size() == header.size() + 1 && got.back() == "split";
  if (got.size() != header.size() && !has_split) {
    throw SchemaError(fmt::format("CSV has unexpected column '{}'", got[header.size()]));
  }

  Dataset data;
  data.schema = schema;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view row = lines[i];
    if (!row.empty() && row.back() == '\r') row.remove_suffix(1);
    const std::size_t line = i + 1;
    try {
      data.records.push_back(parse_row(row, line, schema, header, has_split, i - 1));
      ++rep.loaded;
    } catch (const DataError& e) {
      if (strict) throw;
      ++rep.bad_rows;
      rep.problems.emplace_back(e.what());
    }
  }
  return data;
}

Dataset load_csv(const std::filesystem::path& path, const FeatureSchema& schema, LoadReport* report,
                 bool strict) {
  return parse_csv(read_file(path), schema, report, strict);
}

std::string to_csv(const Dataset& data) {
  const auto header = expected_header(data.schema);
  std::string out;
  for (const auto& h : header) {
    out += h;
    out += ',';
  }
  out += "split\n";
  for (const Record& r : data.records) {
    out += fmt::format("{},{}", r.label, r.user_id);
    for (double v : r.dense) out += fmt::format(",{}", v);
    for (auto v : r.sparse) out += fmt::format(",{}", v);
    for (const auto& seq : r.sequences) out += fmt::format(",{}", fmt::join(seq, "|"));
    out += r.split == Split::kTest ? ",test\n" : ",train\n";
  }
  return out;
}

void save_csv(const Dataset& data, const std::filesystem::path& path) {
  write_file(path, to_csv(data));
}

std::uint32_t crc32(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

std::uint32_t dataset_fingerprint(const Dataset& data) { return crc32(to_csv(data)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(fmt::format("cannot write '{}'", path.string()));
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError(fmt::format("short write to '{}'", path.string()));
}

}  // namespace interformer
