#include "cofee/evaluation.hpp"

#include <gtest/gtest.h>

#include <random>

#include "cofee/mock.hpp"
#include "cofee/synth.hpp"
#include "test_support.hpp"

namespace cofee::eval {
namespace {

using backend::AgentTranscript;
using backend::MockProvider;
using cofee::testing::make_labeled_dataset;

std::vector<FeatureSpec> many_features(std::size_t n) {
  std::vector<FeatureSpec> features;
  for (std::size_t i = 0; i < n; ++i) {
    FeatureSpec f;
    f.feature_name = "feature_" + std::to_string(i);
    f.feature_id = f.feature_name;
    f.definition = "definition " + std::to_string(i);
    f.provenance = {"batch_0001"};
    features.push_back(std::move(f));
  }
  return features;
}

AgentTranscript transcript_with_payload(const std::string& schema_id, const std::string& id,
                                        const std::string& payload) {
  AgentTranscript t;
  t.request.request_id = id;
  t.request.schema_id = schema_id;
  t.request.user_payload = payload;
  t.provider = "mock";
  return t;
}

TEST(Freeze, PreservesCountAndProducesStableChecksum) {
  const auto features = many_features(157);
  const FrozenFeatureSet frozen = freeze(features, "run_a");
  EXPECT_EQ(frozen.features.size(), 157u);
  EXPECT_EQ(frozen.freeze_checksum.size(), 64u);
  EXPECT_EQ(frozen.source_run_id, "run_a");
  const FrozenFeatureSet again = freeze(features, "run_b");
  EXPECT_EQ(frozen.freeze_checksum, again.freeze_checksum);
}

TEST(Freeze, ChecksumSensitiveToSingleCharacterEdit) {
  auto features = many_features(5);
  const std::string before = freeze(features, "r").freeze_checksum;
  features[2].definition[0] = 'X';
  EXPECT_NE(freeze(features, "r").freeze_checksum, before);
}

TEST(Freeze, EmptySetRejected) {
  try {
    freeze({}, "r");
    FAIL() << "expected EmptyFeatureSet";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyFeatureSet);
  }
}

TEST(Freeze, DuplicateFeatureIdsRejected) {
  auto features = many_features(2);
  features[1].feature_id = features[0].feature_id;
  EXPECT_THROW(freeze(features, "r"), Error);
}

TEST(FrozenSetJson, RoundTrips) {
  const FrozenFeatureSet frozen = freeze(many_features(3), "run_x");
  const FrozenFeatureSet parsed = FrozenFeatureSet::from_json(frozen.to_json());
  EXPECT_EQ(parsed.to_json().dump(), frozen.to_json().dump());
}

TEST(AuditLeakage, CleanRunHasNoViolations) {
  const Dataset heldout = make_labeled_dataset(5, 5, DatasetRole::Heldout, "H");
  std::vector<AgentTranscript> transcripts = {
      transcript_with_payload(backend::kDiscoverySchema, "disc_1", "records about D0001 D0002"),
      transcript_with_payload(backend::kMergeSchema, "cons_1", "features only"),
  };
  EXPECT_TRUE(audit_leakage(transcripts, heldout).passed());
}

TEST(AuditLeakage, FlagsInjectedHeldoutId) {
  const Dataset heldout = make_labeled_dataset(5, 5, DatasetRole::Heldout, "H");
  std::vector<AgentTranscript> transcripts = {
      transcript_with_payload(backend::kDiscoverySchema, "disc_1",
                              "payload mentioning " + heldout.records[3].entity_id),
  };
  const AuditReport report = audit_leakage(transcripts, heldout);
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].transcript_id, "disc_1");
  EXPECT_EQ(report.violations[0].offending_entity_id, heldout.records[3].entity_id);
}

TEST(AuditLeakage, ScoringStagePayloadsAreExempt) {
  const Dataset heldout = make_labeled_dataset(5, 5, DatasetRole::Heldout, "H");
  std::vector<AgentTranscript> transcripts = {
      transcript_with_payload(backend::kAssignmentSchema, "score_1",
                              "legitimately contains " + heldout.records[0].entity_id),
  };
  EXPECT_TRUE(audit_leakage(transcripts, heldout).passed());
}

TEST(AuditLeakage, FuzzedContaminationsAreAllRecovered) {
  const Dataset heldout = make_labeled_dataset(10, 10, DatasetRole::Heldout, "H");
  std::mt19937 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<AgentTranscript> transcripts;
    std::vector<std::pair<std::string, std::string>> planted;  // transcript_id, entity_id
    for (int t = 0; t < 6; ++t) {
      const std::string id = "disc_" + std::to_string(t);
      std::string payload = "clean payload text";
      if (rng() % 2 == 0) {
        const auto& entity = heldout.records[rng() % heldout.records.size()].entity_id;
        payload += " " + entity;
        planted.emplace_back(id, entity);
      }
      transcripts.push_back(transcript_with_payload(backend::kDiscoverySchema, id, payload));
    }
    const AuditReport report = audit_leakage(transcripts, heldout);
    ASSERT_EQ(report.violations.size(), planted.size());
    for (std::size_t i = 0; i < planted.size(); ++i) {
      EXPECT_EQ(report.violations[i].transcript_id, planted[i].first);
      EXPECT_EQ(report.violations[i].offending_entity_id, planted[i].second);
    }
  }
}

TEST(EvaluateHeldout, RequiresHeldoutRole) {
  const Dataset not_heldout = make_labeled_dataset(3, 3, DatasetRole::Discovery);
  MockProvider provider(backend::MockRulebook{});
  const FrozenFeatureSet frozen = freeze(many_features(2), "r");
  try {
    evaluate_heldout(frozen, not_heldout, provider);
    FAIL() << "expected InvalidRole";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidRole);
  }
}

TEST(EvaluateHeldout, AbortsOnLeakage) {
  const Dataset heldout = make_labeled_dataset(3, 3, DatasetRole::Heldout, "H");
  MockProvider provider(backend::MockRulebook{});
  const FrozenFeatureSet frozen = freeze(many_features(2), "r");
  std::vector<AgentTranscript> contaminated = {
      transcript_with_payload(backend::kDiscoverySchema, "disc_1", heldout.records[0].entity_id),
  };
  try {
    evaluate_heldout(frozen, heldout, provider, &contaminated);
    FAIL() << "expected LeakageDetected";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LeakageDetected);
  }
}

TEST(EvaluateHeldout, PlantedFeatureMeasuredAtGroundTruth) {
  // Held-out plant at (67, 33) in a 400/600 population: delta is 0.300 by
  // construction; the mock scorer recovers it exactly.
  const std::vector<synth::PlantedFeature> plants = {{"planted_signal_flag", "zqheld", 67, 33}};
  const Dataset heldout =
      synth::generate_population({400, 600}, plants, 424242, DatasetRole::Heldout, "H");
  MockProvider provider(synth::derive_rulebook(plants));

  std::vector<FeatureSpec> features;
  {
    // Frozen feature whose definition carries the trigger token, as discovery
    // would have produced it.
    FeatureSpec f;
    f.feature_name = "planted_signal_flag";
    f.feature_id = "planted_signal_flag";
    f.definition = "The record notes contain the marker token 'zqheld'";
    f.provenance = {"batch_0001"};
    features.push_back(std::move(f));
    FeatureSpec never;
    never.feature_name = "never_assigned";
    never.feature_id = "never_assigned";
    never.definition = "matches nothing";
    never.provenance = {"batch_0001"};
    features.push_back(std::move(never));
  }
  const FrozenFeatureSet frozen = freeze(features, "run_h");
  const std::string checksum_before = frozen.freeze_checksum;
  std::vector<AgentTranscript> clean_history;
  const HeldoutEvaluation evaluation =
      evaluate_heldout(frozen, heldout, provider, &clean_history);

  EXPECT_EQ(evaluation.freeze_checksum, checksum_before);
  EXPECT_EQ(freeze_checksum_of(frozen.features), checksum_before);  // unchanged by evaluation
  ASSERT_EQ(evaluation.stats.size(), 2u);

  const FeatureStats& planted = evaluation.stats[0];
  EXPECT_EQ(planted.feature_id, "planted_signal_flag");
  EXPECT_EQ(planted.n1, 67u);
  EXPECT_EQ(planted.n0, 33u);
  EXPECT_DOUBLE_EQ(planted.base_rate, 0.4);
  ASSERT_TRUE(planted.delta_sr.has_value());
  const double expected = synth::expected_delta_sr(plants[0], {400, 600});
  EXPECT_NEAR(*planted.delta_sr, expected, 1e-12);
  EXPECT_TRUE(cofee::testing::near(*planted.delta_sr, 0.30, 0.03));

  // Zero-support feature: reported with zero support, excluded from ranking.
  const FeatureStats& never = evaluation.stats[1];
  EXPECT_EQ(never.n1 + never.n0, 0u);
  EXPECT_FALSE(never.delta_sr.has_value());
  EXPECT_EQ(metrics::rank_top_k(evaluation.stats, 10).size(), 1u);
}

TEST(EvaluateHeldout, ReplayReproducesStatsBitForBit) {
  const std::vector<synth::PlantedFeature> plants = {{"signal_a", "zqra", 12, 5},
                                                     {"signal_b", "zqrb", 4, 9}};
  const Dataset heldout =
      synth::generate_population({40, 60}, plants, 7, DatasetRole::Heldout, "H");
  const backend::PriceTable prices{1.5, 4.0};
  MockProvider mock(synth::derive_rulebook(plants), prices);

  std::vector<FeatureSpec> features;
  for (const auto& plant : plants) {
    FeatureSpec f;
    f.feature_name = plant.feature_name;
    f.feature_id = slug_from_name(plant.feature_name);
    f.definition = "The record notes contain the marker token '" + plant.trigger_token + "'";
    f.provenance = {"batch_0001"};
    features.push_back(std::move(f));
  }
  const FrozenFeatureSet frozen = freeze(features, "run_replay");
  const HeldoutEvaluation first = evaluate_heldout(frozen, heldout, mock);

  backend::ReplayProvider replay(first.transcripts, prices);
  const HeldoutEvaluation second = evaluate_heldout(frozen, heldout, replay);
  EXPECT_EQ(metrics::stats_to_json(first.stats).dump(), metrics::stats_to_json(second.stats).dump());
  EXPECT_EQ(first.matrix.to_json().dump(), second.matrix.to_json().dump());
}

}  // namespace
}  // namespace cofee::eval
