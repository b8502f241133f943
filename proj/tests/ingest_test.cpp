#include "cofee/ingest.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "cofee/synth.hpp"
#include "test_support.hpp"

namespace cofee::ingest {
namespace {

using cofee::testing::TempDir;
using cofee::testing::make_labeled_dataset;

TEST(LoadDataset, WellFormedThousandLineFile) {
  TempDir dir;
  const auto path = dir.path() / "founders.jsonl";
  save_dataset(path, make_labeled_dataset(400, 600));
  const Dataset loaded = load_dataset(path, DatasetRole::Discovery);
  EXPECT_EQ(loaded.records.size(), 1000u);
  EXPECT_EQ(loaded.n1, 400u);
  EXPECT_EQ(loaded.n0, 600u);
}

TEST(LoadDataset, EmptyFileIsParseError) {
  TempDir dir;
  const auto path = dir.path() / "empty.jsonl";
  write_text_file(path, "");
  try {
    load_dataset(path, DatasetRole::Discovery);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("empty"), std::string::npos);
  }
}

TEST(LoadDataset, MalformedLineReportsItsNumber) {
  TempDir dir;
  const auto path = dir.path() / "broken.jsonl";
  std::string content;
  for (int i = 1; i <= 10; ++i) {
    if (i == 7) {
      content += "{\"entity_id\": broken\n";
    } else {
      content += record_to_json(EntityRecord{"E" + std::to_string(i), Json::object(),
                                             Outcome::Success})
                     .dump() +
                 "\n";
    }
  }
  write_text_file(path, content);
  try {
    load_dataset(path, DatasetRole::Discovery);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 7);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
}

TEST(LoadDataset, PropagatesValidationErrors) {
  TempDir dir;
  const auto path = dir.path() / "dup.jsonl";
  const std::string line =
      record_to_json(EntityRecord{"E1", Json::object(), Outcome::Success}).dump();
  write_text_file(path, line + "\n" + line + "\n");
  try {
    load_dataset(path, DatasetRole::Discovery);
    FAIL() << "expected DuplicateEntityId";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateEntityId);
  }
}

TEST(LoadDataset, RoundTripsThroughSave) {
  TempDir dir;
  const Dataset dataset = synth::generate_population({12, 18}, {{"alpha", "zqa", 3, 4}}, 5);
  const auto path = dir.path() / "synth.jsonl";
  save_dataset(path, dataset);
  const Dataset loaded = load_dataset(path, DatasetRole::Discovery);
  EXPECT_EQ(dataset_to_jsonl(loaded), dataset_to_jsonl(dataset));
}

TEST(StratifiedSplit, PreservesClassBalanceExactly) {
  const Dataset pool = make_labeled_dataset(800, 1200);  // 2,000 at 40%
  const ExperimentSplit split = stratified_split(pool, 0.5, 42);
  EXPECT_EQ(split.discovery.records.size(), 1000u);
  EXPECT_EQ(split.heldout.records.size(), 1000u);
  EXPECT_EQ(split.discovery.n1, 400u);
  EXPECT_EQ(split.discovery.n0, 600u);
  EXPECT_EQ(split.heldout.n1, 400u);
  EXPECT_EQ(split.heldout.n0, 600u);
}

TEST(StratifiedSplit, DeterministicForSameSeed) {
  const Dataset pool = make_labeled_dataset(40, 60);
  const ExperimentSplit a = stratified_split(pool, 0.5, 7);
  const ExperimentSplit b = stratified_split(pool, 0.5, 7);
  EXPECT_EQ(dataset_to_jsonl(a.discovery), dataset_to_jsonl(b.discovery));
  EXPECT_EQ(dataset_to_jsonl(a.heldout), dataset_to_jsonl(b.heldout));
  const ExperimentSplit c = stratified_split(pool, 0.5, 8);
  EXPECT_NE(dataset_to_jsonl(a.discovery), dataset_to_jsonl(c.discovery));
}

TEST(StratifiedSplit, FiftySeedsAllDisjointAndBalanced) {
  const Dataset pool = make_labeled_dataset(80, 120);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const ExperimentSplit split = stratified_split(pool, 0.5, seed);
    const std::set<std::string> discovery_ids = split.discovery.entity_ids();
    for (const auto& record : split.heldout.records) {
      EXPECT_EQ(discovery_ids.count(record.entity_id), 0u);
    }
    EXPECT_EQ(split.discovery.records.size() + split.heldout.records.size(), pool.records.size());
    // class proportion within one record of the configured fraction
    EXPECT_LE(std::abs(static_cast<long>(split.discovery.n1) - 40L), 1L);
    EXPECT_LE(std::abs(static_cast<long>(split.discovery.n0) - 60L), 1L);
    EXPECT_NO_THROW(check_disjoint(split.discovery, split.heldout));
  }
}

TEST(StratifiedSplit, UnevenFractionStaysWithinOneRecord) {
  const Dataset pool = make_labeled_dataset(41, 59);
  const ExperimentSplit split = stratified_split(pool, 0.3, 3);
  EXPECT_LE(std::abs(static_cast<double>(split.discovery.n1) - 0.3 * 41.0), 1.0);
  EXPECT_LE(std::abs(static_cast<double>(split.discovery.n0) - 0.3 * 59.0), 1.0);
}

TEST(StratifiedSplit, RejectsDegenerateSides) {
  const Dataset tiny = make_labeled_dataset(1, 1);
  try {
    stratified_split(tiny, 0.4, 1);
    FAIL() << "expected InsufficientRecords";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientRecords);
  }
  const Dataset pool = make_labeled_dataset(10, 10);
  EXPECT_THROW(stratified_split(pool, 0.0, 1), Error);
  EXPECT_THROW(stratified_split(pool, 1.0, 1), Error);
}

TEST(MaterializeSplit, WritesFilesAndChecksummedManifest) {
  TempDir dir;
  const Dataset pool = make_labeled_dataset(20, 30);
  const ExperimentSplit split = stratified_split(pool, 0.5, 11);
  const SplitManifest manifest = materialize_split(split, dir.path());
  EXPECT_EQ(manifest.seed, 11u);
  const std::string discovery_bytes = read_text_file(dir.path() / manifest.discovery_path);
  const std::string heldout_bytes = read_text_file(dir.path() / manifest.heldout_path);
  EXPECT_EQ(sha256_hex(discovery_bytes), manifest.discovery_sha);
  EXPECT_EQ(sha256_hex(heldout_bytes), manifest.heldout_sha);

  const SplitManifest loaded =
      SplitManifest::from_json(read_json_file(dir.path() / "split_manifest.json"));
  EXPECT_EQ(loaded.to_json().dump(), manifest.to_json().dump());

  const Dataset discovery = load_dataset(dir.path() / manifest.discovery_path, DatasetRole::Discovery);
  const Dataset heldout = load_dataset(dir.path() / manifest.heldout_path, DatasetRole::Heldout);
  EXPECT_NO_THROW(check_disjoint(discovery, heldout));
}

TEST(CheckDisjoint, DetectsSharedEntities) {
  const Dataset a = make_labeled_dataset(2, 2, DatasetRole::Discovery);
  const Dataset b = make_labeled_dataset(2, 2, DatasetRole::Heldout);  // same id prefix
  try {
    check_disjoint(a, b);
    FAIL() << "expected DatasetOverlap";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DatasetOverlap);
  }
}

}  // namespace
}  // namespace cofee::ingest
