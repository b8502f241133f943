#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cofee/core.hpp"
#include "cofee/errors.hpp"
#include "cofee/util.hpp"

namespace cofee::ingest {

/// Loads a line-delimited JSON dataset and validates it. Parse failures are
/// reported with their 1-based line number.
inline Dataset load_dataset(const std::filesystem::path& path, DatasetRole role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::ConfigError, "cannot open dataset file: " + path.string());
  }
  std::vector<EntityRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    records.push_back(record_from_json_line(line, line_no));
  }
  if (records.empty()) {
    throw ParseError(0, "empty dataset file: " + path.string());
  }
  return validate_dataset(std::move(records), role);
}

inline std::string dataset_to_jsonl(const Dataset& dataset) {
  std::ostringstream out;
  for (const auto& record : dataset.records) {
    out << record_to_json(record).dump() << "\n";
  }
  return out.str();
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  write_text_file(path, dataset_to_jsonl(dataset));
}

/// A discovery/held-out pair with disjoint entity ids.
struct ExperimentSplit {
  Dataset discovery;
  Dataset heldout;
  std::uint64_t seed = 0;
};

/// Stratified split of a pooled dataset: both sides keep the pool's success
/// proportion to within one record. Pure function of (pool, fraction, seed).
inline ExperimentSplit stratified_split(const Dataset& pool, double discovery_fraction,
                                        std::uint64_t seed) {
  if (!(discovery_fraction > 0.0 && discovery_fraction < 1.0)) {
    throw Error(ErrorCode::ConfigError, "discovery_fraction must be in (0, 1)");
  }
  std::vector<std::size_t> success_idx;
  std::vector<std::size_t> failure_idx;
  for (std::size_t i = 0; i < pool.records.size(); ++i) {
    if (pool.records[i].outcome.value() == Outcome::Success) {
      success_idx.push_back(i);
    } else {
      failure_idx.push_back(i);
    }
  }
  const auto take1 = static_cast<std::size_t>(
      std::llround(discovery_fraction * static_cast<double>(success_idx.size())));
  const auto take0 = static_cast<std::size_t>(
      std::llround(discovery_fraction * static_cast<double>(failure_idx.size())));
  if (take1 == 0 || take0 == 0 || take1 >= success_idx.size() || take0 >= failure_idx.size()) {
    throw Error(ErrorCode::InsufficientRecords,
                "split would leave a side without records of one class");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(success_idx.begin(), success_idx.end(), rng);
  std::shuffle(failure_idx.begin(), failure_idx.end(), rng);

  std::set<std::size_t> discovery_rows;
  for (std::size_t i = 0; i < take1; ++i) discovery_rows.insert(success_idx[i]);
  for (std::size_t i = 0; i < take0; ++i) discovery_rows.insert(failure_idx[i]);

  std::vector<EntityRecord> discovery_records;
  std::vector<EntityRecord> heldout_records;
  for (std::size_t i = 0; i < pool.records.size(); ++i) {
    if (discovery_rows.count(i) != 0) {
      discovery_records.push_back(pool.records[i]);
    } else {
      heldout_records.push_back(pool.records[i]);
    }
  }

  ExperimentSplit split;
  split.discovery = validate_dataset(std::move(discovery_records), DatasetRole::Discovery);
  split.heldout = validate_dataset(std::move(heldout_records), DatasetRole::Heldout);
  split.seed = seed;
  return split;
}

/// Audit trail for a materialized split: seed plus content checksums of the
/// two files, so later tampering with either side is detectable.
struct SplitManifest {
  std::uint64_t seed = 0;
  std::string discovery_path;
  std::string heldout_path;
  std::string discovery_sha;
  std::string heldout_sha;

  Json to_json() const {
    return Json{{"seed", seed},
                {"discovery_path", discovery_path},
                {"heldout_path", heldout_path},
                {"discovery_sha", discovery_sha},
                {"heldout_sha", heldout_sha}};
  }

  static SplitManifest from_json(const Json& j) {
    SplitManifest m;
    try {
      m.seed = j.at("seed").get<std::uint64_t>();
      m.discovery_path = j.at("discovery_path").get<std::string>();
      m.heldout_path = j.at("heldout_path").get<std::string>();
      m.discovery_sha = j.at("discovery_sha").get<std::string>();
      m.heldout_sha = j.at("heldout_sha").get<std::string>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("bad split manifest: ") + e.what());
    }
    return m;
  }
};

/// Writes discovery.jsonl, heldout.jsonl, and split_manifest.json under dir.
inline SplitManifest materialize_split(const ExperimentSplit& split,
                                       const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string discovery_bytes = dataset_to_jsonl(split.discovery);
  const std::string heldout_bytes = dataset_to_jsonl(split.heldout);
  write_text_file(dir / "discovery.jsonl", discovery_bytes);
  write_text_file(dir / "heldout.jsonl", heldout_bytes);
  SplitManifest manifest;
  manifest.seed = split.seed;
  manifest.discovery_path = "discovery.jsonl";
  manifest.heldout_path = "heldout.jsonl";
  manifest.discovery_sha = sha256_hex(discovery_bytes);
  manifest.heldout_sha = sha256_hex(heldout_bytes);
  write_json_file(dir / "split_manifest.json", manifest.to_json());
  return manifest;
}

/// Discovery/held-out pairs must never share an entity.
inline void check_disjoint(const Dataset& discovery, const Dataset& heldout) {
  const std::set<std::string> ids = discovery.entity_ids();
  for (const auto& record : heldout.records) {
    if (ids.count(record.entity_id) != 0) {
      throw Error(ErrorCode::DatasetOverlap,
                  "entity '" + record.entity_id + "' appears in both discovery and heldout sets");
    }
  }
}

}  // namespace cofee::ingest
