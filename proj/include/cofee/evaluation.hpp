#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cofee/agents.hpp"
#include "cofee/backend.hpp"
#include "cofee/core.hpp"
#include "cofee/errors.hpp"
#include "cofee/metrics.hpp"
#include "cofee/util.hpp"

namespace cofee::eval {

/// Immutable post-consolidation feature set. The checksum binds every
/// downstream metrics artifact to the exact features it was computed from.
struct FrozenFeatureSet {
  std::vector<FeatureSpec> features;
  std::string freeze_checksum;
  std::string source_run_id;

  Json to_json() const {
    Json features_json = Json::array();
    for (const auto& f : features) features_json.push_back(feature_to_json(f));
    return Json{{"run_id", source_run_id},
                {"freeze_checksum", freeze_checksum},
                {"features", features_json}};
  }

  static FrozenFeatureSet from_json(const Json& j) {
    FrozenFeatureSet set;
    try {
      set.source_run_id = j.at("run_id").get<std::string>();
      set.freeze_checksum = j.at("freeze_checksum").get<std::string>();
      for (const auto& f : j.at("features")) set.features.push_back(feature_from_json(f));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("bad frozen feature set: ") + e.what());
    }
    return set;
  }
};

inline std::string freeze_checksum_of(const std::vector<FeatureSpec>& features) {
  Json features_json = Json::array();
  for (const auto& f : features) features_json.push_back(feature_to_json(f));
  return sha256_hex(features_json.dump());
}

/// Freezes the consolidated master list: from here on the features are
/// applied, never changed.
inline FrozenFeatureSet freeze(const std::vector<FeatureSpec>& master, std::string run_id) {
  if (master.empty()) {
    throw Error(ErrorCode::EmptyFeatureSet, "cannot freeze an empty feature set");
  }
  std::unordered_set<std::string> ids;
  for (const auto& f : master) {
    if (!ids.insert(f.feature_id).second) {
      throw Error(ErrorCode::DuplicateEntityId,
                  "feature id '" + f.feature_id + "' appears twice in the master list");
    }
  }
  FrozenFeatureSet set;
  set.features = master;
  set.freeze_checksum = freeze_checksum_of(master);
  set.source_run_id = std::move(run_id);
  return set;
}

struct LeakageViolation {
  std::string transcript_id;
  std::string offending_entity_id;
};

struct AuditReport {
  std::vector<LeakageViolation> violations;

  bool passed() const { return violations.empty(); }

  Json to_json() const {
    Json out = Json::array();
    for (const auto& v : violations) {
      out.push_back(Json{{"transcript_id", v.transcript_id},
                         {"offending_entity_id", v.offending_entity_id}});
    }
    return out;
  }
};

/// Scans every discovery and consolidation payload for held-out entity ids.
/// Scoring transcripts are exempt: applying frozen features to the held-out
/// set is the one place those ids legitimately appear.
inline AuditReport audit_leakage(const std::vector<backend::AgentTranscript>& transcripts,
                                 const Dataset& heldout) {
  AuditReport report;
  for (const auto& t : transcripts) {
    const auto stage = backend::stage_for_schema(t.request.schema_id);
    if (stage == backend::Stage::Scoring) continue;
    for (const auto& record : heldout.records) {
      if (t.request.user_payload.find(record.entity_id) != std::string::npos) {
        report.violations.push_back(LeakageViolation{t.request.request_id, record.entity_id});
      }
    }
  }
  return report;
}

struct HeldoutEvaluation {
  std::string freeze_checksum;
  std::vector<FeatureStats> stats;  // frozen-list order
  std::vector<backend::AgentTranscript> transcripts;
  AssignmentMatrix matrix;
};

/// Applies a frozen feature set to the held-out dataset: score with Agent 3,
/// then compute stats deterministically against the held-out population.
/// When discovery-run transcripts are supplied, the leakage audit runs first
/// and any violation aborts the evaluation.
inline HeldoutEvaluation evaluate_heldout(
    const FrozenFeatureSet& frozen, const Dataset& heldout, backend::Provider& provider,
    const std::vector<backend::AgentTranscript>* discovery_transcripts = nullptr,
    std::size_t feature_batch = agents::kDefaultScoringFeatureBatch,
    std::size_t record_batch = agents::kDefaultScoringRecordBatch,
    const std::string& request_tag = "score_held") {
  if (heldout.role != DatasetRole::Heldout) {
    throw Error(ErrorCode::InvalidRole, "held-out evaluation requires a heldout-role dataset");
  }
  if (discovery_transcripts != nullptr) {
    AuditReport audit = audit_leakage(*discovery_transcripts, heldout);
    if (!audit.passed()) {
      throw Error(ErrorCode::LeakageDetected,
                  "held-out entity '" + audit.violations.front().offending_entity_id +
                      "' appeared in transcript '" + audit.violations.front().transcript_id + "'");
    }
  }

  agents::ScoringResult scored = agents::score_features(frozen.features, heldout, provider,
                                                        feature_batch, record_batch, request_tag);

  const metrics::PopulationCounts pop = metrics::population_of(heldout);
  HeldoutEvaluation evaluation;
  evaluation.freeze_checksum = frozen.freeze_checksum;
  evaluation.transcripts = std::move(scored.transcripts);
  for (const auto& feature : frozen.features) {
    const auto& ids = scored.matrix.assignments.at(feature.feature_id);
    if (ids.empty()) {
      evaluation.stats.push_back(metrics::zero_support_stats(feature.feature_id, pop));
      continue;
    }
    auto [n1, n0] = metrics::count_feature(ids, heldout);
    evaluation.stats.push_back(metrics::extended_stats(n1, n0, pop, feature.feature_id));
  }
  evaluation.matrix = std::move(scored.matrix);
  return evaluation;
}

}  // namespace cofee::eval
