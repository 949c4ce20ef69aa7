#include <gtest/gtest.h>

#include <filesystem>

#include "interformer/csv.hpp"
#include "interformer/errors.hpp"
#include "interformer/synthetic.hpp"

using namespace interformer;

namespace {

FeatureSchema schema() {
  FeatureSchema s;
  s.dense_count = 1;
  s.sparse = {{"cat", 4}};
  s.sequences = {{"hist", 4, 3}};
  s.embedding_dim = 2;
  return s;
}

const char* kHeader = "label,user_id,dense_0,sparse_cat,seq_hist";

}  // namespace

TEST(Csv, SyntheticRoundTripIsExact) {
  SyntheticConfig c;
  c.examples = 300;
  const Dataset d = generate_synthetic(c, 4);
  const std::string text = to_csv(d);
  LoadReport rep;
  const Dataset back = parse_csv(text, d.schema, &rep, true);
  EXPECT_EQ(rep.loaded, 300u);
  EXPECT_EQ(back.records, d.records);
  EXPECT_EQ(to_csv(back), text);
  EXPECT_EQ(dataset_fingerprint(back), dataset_fingerprint(d));
}

TEST(Csv, FileRoundTrip) {
  SyntheticConfig c;
  c.examples = 50;
  const Dataset d = generate_synthetic(c, 9);
  const auto path = std::filesystem::temp_directory_path() / "interformer_csv_test.csv";
  save_csv(d, path);
  EXPECT_EQ(load_csv(path, d.schema).records, d.records);
  std::filesystem::remove(path);
  EXPECT_THROW(load_csv(path, d.schema), DataError);
}

TEST(Csv, HeaderMismatchIsSchemaError) {
  EXPECT_THROW(parse_csv("label,user_id,dense_0,sparse_cat\n", schema()), SchemaError);
  EXPECT_THROW(parse_csv("label,user_id,dense_0,sparse_dog,seq_hist\n", schema()), SchemaError);
  EXPECT_THROW(parse_csv(std::string(kHeader) + ",extra\n", schema()), SchemaError);
  EXPECT_THROW(parse_csv("", schema()), SchemaError);
  // strictness does not matter for the header
  EXPECT_THROW(parse_csv("label\n", schema(), nullptr, false), SchemaError);
}

TEST(Csv, NonStrictSkipsBadRowsStrictThrows) {
  const std::string text = std::string(kHeader) +
                           "\n"
                           "1,3,0.5,2,0|1\n"
                           "1,3,abc,2,0\n"    // bad number
                           "0,3,0.5,9,0\n"    // out of vocabulary
                           "2,3,0.5,1,0\n"    // bad label
                           "0,3,0.5,1\n"      // short row
                           "0,4,-1.25,3,\n";
  LoadReport rep;
  const Dataset d = parse_csv(text, schema(), &rep, false);
  EXPECT_EQ(rep.loaded, 2u);
  EXPECT_EQ(rep.bad_rows, 4u);
  ASSERT_EQ(rep.problems.size(), 4u);
  EXPECT_NE(rep.problems[0].find("line 3"), std::string::npos);
  EXPECT_NE(rep.problems[1].find("sparse_cat"), std::string::npos);
  ASSERT_EQ(d.records.size(), 2u);
  EXPECT_TRUE(d.records[1].sequences[0].empty());
  EXPECT_EQ(d.records[1].dense[0], -1.25);

  try {
    parse_csv(text, schema(), nullptr, true);
    FAIL() << "strict parse accepted a bad row";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  const std::string oov = std::string(kHeader) + "\n0,3,0.5,9,0\n";
  EXPECT_THROW(parse_csv(oov, schema(), nullptr, true), IngestionError);
}

TEST(Csv, SplitColumnAndDefaultRule) {
  std::string with = std::string(kHeader) + ",split\n1,0,0,0,1,test\n0,0,0,0,1,train\n";
  const Dataset a = parse_csv(with, schema());
  EXPECT_EQ(a.records[0].split, Split::kTest);
  EXPECT_EQ(a.records[1].split, Split::kTrain);
  EXPECT_THROW(parse_csv(with + "0,0,0,0,1,dev\n", schema(), nullptr, true), ParseError);

  std::string without = std::string(kHeader) + "\n";
  for (int i = 0; i < 45; ++i) without += "0,0,0,0,1\n";
  const Dataset b = parse_csv(without, schema());
  for (std::size_t i = 0; i < b.records.size(); ++i) {
    EXPECT_EQ(b.records[i].split, i % 20 < 3 ? Split::kTest : Split::kTrain) << i;
  }
  EXPECT_EQ(b.indices(Split::kTest).size(), 9u);
}

TEST(Csv, LongSequencesKeepMostRecentItems) {
  const std::string text = std::string(kHeader) + "\n1,0,0,0,0|1|2|3|2\r\n";
  const Dataset d = parse_csv(text, schema());
  EXPECT_EQ(d.records[0].sequences[0], (std::vector<std::int64_t>{2, 3, 2}));
}

TEST(Csv, Crc32MatchesKnownValue) {
  EXPECT_EQ(crc32("123456789"), 0xCBF43926u);
  EXPECT_EQ(crc32(""), 0u);
}
