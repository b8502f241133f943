#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cofee/agents.hpp"
#include "cofee/backend.hpp"
#include "cofee/core.hpp"
#include "cofee/errors.hpp"
#include "cofee/evaluation.hpp"
#include "cofee/ingest.hpp"
#include "cofee/live.hpp"
#include "cofee/metrics.hpp"
#include "cofee/mock.hpp"
#include "cofee/synth.hpp"
#include "cofee/util.hpp"

namespace cofee::cli {

namespace fs = std::filesystem;

// Exit codes: 0 success, 2 usage/config, 3 provider, 4 validation.
inline int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidRole:
      return 2;
    case ErrorCode::TransportError:
    case ErrorCode::ReplayMiss:
    case ErrorCode::ProviderRejection:
      return 3;
    default:
      return 4;
  }
}

/// Full run configuration. The defaults are the pipeline's reference
/// parameters: discovery batches of 50, scoring batches of 100 features,
/// support cutoff 100, top-10 ranking.
struct RunConfig {
  Condition condition = Condition::Cognitive;
  std::string provider = "mock";  // live | replay | mock
  std::size_t discovery_batch_size = agents::kDefaultDiscoveryBatchSize;
  std::size_t scoring_feature_batch = agents::kDefaultScoringFeatureBatch;
  std::size_t scoring_record_batch = agents::kDefaultScoringRecordBatch;
  std::size_t consolidation_batch_size = agents::kDefaultConsolidationBatchSize;
  std::size_t min_support_count = metrics::kDefaultMinSupportCount;
  std::size_t top_k = 10;
  std::uint64_t seed = 0;
  int parallelism = 1;
  bool score_discovery = true;

  std::string discovery_dataset;
  std::string heldout_dataset;
  std::string pool_dataset;
  double discovery_fraction = 0.5;
  std::string cassette;   // replay source
  std::string rulebook;   // mock rules
  std::string output_dir = "out";
  std::string template_dir;

  backend::PriceTable prices;
  backend::LiveConfig live;

  Json to_json() const {
    return Json{
        {"condition", condition_name(condition)},
        {"provider", provider},
        {"batch_sizes",
         Json{{"discovery", discovery_batch_size},
              {"scoring_features", scoring_feature_batch},
              {"scoring_records", scoring_record_batch},
              {"consolidation", consolidation_batch_size}}},
        {"min_support_count", min_support_count},
        {"top_k", top_k},
        {"seed", seed},
        {"parallelism", parallelism},
        {"score_discovery", score_discovery},
        {"discovery_fraction", discovery_fraction},
        {"paths",
         Json{{"discovery_dataset", discovery_dataset},
              {"heldout_dataset", heldout_dataset},
              {"pool_dataset", pool_dataset},
              {"cassette", cassette},
              {"rulebook", rulebook},
              {"output_dir", output_dir},
              {"template_dir", template_dir}}},
        {"price_table", prices.to_json()},
        {"live",
         Json{{"base_url", live.base_url},
              {"completion_path", live.completion_path},
              {"model", live.model},
              {"max_attempts", live.max_attempts},
              {"backoff_base_ms", live.backoff_base_ms}}},
    };
  }

  static RunConfig from_json(const Json& j) {
    RunConfig c;
    try {
      if (j.contains("condition")) c.condition = condition_from_name(j.at("condition").get<std::string>());
      c.provider = j.value("provider", c.provider);
      if (j.contains("batch_sizes")) {
        const Json& b = j.at("batch_sizes");
        c.discovery_batch_size = b.value("discovery", c.discovery_batch_size);
        c.scoring_feature_batch = b.value("scoring_features", c.scoring_feature_batch);
        c.scoring_record_batch = b.value("scoring_records", c.scoring_record_batch);
        c.consolidation_batch_size = b.value("consolidation", c.consolidation_batch_size);
      }
      c.min_support_count = j.value("min_support_count", c.min_support_count);
      c.top_k = j.value("top_k", c.top_k);
      c.seed = j.value("seed", c.seed);
      c.parallelism = j.value("parallelism", c.parallelism);
      c.score_discovery = j.value("score_discovery", c.score_discovery);
      c.discovery_fraction = j.value("discovery_fraction", c.discovery_fraction);
      if (j.contains("paths")) {
        const Json& p = j.at("paths");
        c.discovery_dataset = p.value("discovery_dataset", "");
        c.heldout_dataset = p.value("heldout_dataset", "");
        c.pool_dataset = p.value("pool_dataset", "");
        c.cassette = p.value("cassette", "");
        c.rulebook = p.value("rulebook", "");
        c.output_dir = p.value("output_dir", c.output_dir);
        c.template_dir = p.value("template_dir", "");
      }
      if (j.contains("price_table")) c.prices = backend::PriceTable::from_json(j.at("price_table"));
      if (j.contains("live")) {
        const Json& l = j.at("live");
        c.live.base_url = l.value("base_url", "");
        c.live.completion_path = l.value("completion_path", c.live.completion_path);
        c.live.model = l.value("model", "");
        c.live.max_attempts = l.value("max_attempts", c.live.max_attempts);
        c.live.backoff_base_ms = l.value("backoff_base_ms", c.live.backoff_base_ms);
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("bad run config: ") + e.what());
    }
    return c;
  }
};

inline RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) {
    throw Error(ErrorCode::ConfigError, "config file does not exist: " + path.string());
  }
  try {
    return RunConfig::from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseFailure) {
      throw Error(ErrorCode::ConfigError, e.what());
    }
    throw;
  }
}

/// The Agent 1 condition in force: a custom template from template_dir when
/// configured, otherwise the built-in one. Invariants are enforced either way.
inline agents::PromptCondition load_condition(const RunConfig& config) {
  agents::PromptCondition condition;
  condition.kind = config.condition;
  if (!config.template_dir.empty()) {
    const fs::path path =
        fs::path(config.template_dir) / (std::string(condition_name(config.condition)) + ".txt");
    condition.template_text = read_text_file(path);
  } else {
    condition.template_text = agents::default_discovery_template(config.condition);
  }
  agents::validate_condition(condition);
  return condition;
}

inline std::unique_ptr<backend::Provider> make_provider(const RunConfig& config) {
  if (config.provider == "mock") {
    if (config.rulebook.empty()) {
      throw Error(ErrorCode::ConfigError, "mock provider requires paths.rulebook");
    }
    if (!fs::exists(config.rulebook)) {
      throw Error(ErrorCode::ConfigError, "rulebook file does not exist: " + config.rulebook);
    }
    return std::make_unique<backend::MockProvider>(
        backend::MockRulebook::from_json(read_json_file(config.rulebook)), config.prices);
  }
  if (config.provider == "replay") {
    if (config.cassette.empty()) {
      throw Error(ErrorCode::ConfigError, "replay provider requires paths.cassette");
    }
    if (!fs::exists(config.cassette)) {
      throw Error(ErrorCode::ConfigError, "cassette file does not exist: " + config.cassette);
    }
    return std::make_unique<backend::ReplayProvider>(fs::path(config.cassette), config.prices);
  }
  if (config.provider == "live") {
    backend::LiveConfig live = config.live;
    live.prices = config.prices;
    return std::make_unique<backend::LiveProvider>(live);
  }
  throw Error(ErrorCode::ConfigError, "unknown provider '" + config.provider + "'");
}

/// Accepts master-list, consolidated-list, or frozen-feature files.
inline std::vector<FeatureSpec> load_feature_list(const fs::path& path) {
  Json j = read_json_file(path);
  if (j.contains("freeze_checksum")) return eval::FrozenFeatureSet::from_json(j).features;
  return agents::MasterList::from_json(j).features;
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

/// Generates a population from a plan file; writes the dataset, the derived
/// mock rulebook, and the per-plant ground truth (Eq.-style delta at
/// generation time) into out_dir.
inline void cmd_synth(const fs::path& plan_path, const fs::path& out_dir) {
  if (!fs::exists(plan_path)) {
    throw Error(ErrorCode::ConfigError, "plan file does not exist: " + plan_path.string());
  }
  const synth::SynthPlan plan = synth::SynthPlan::from_json(read_json_file(plan_path));
  const Dataset dataset =
      synth::generate_population(plan.population, plan.planted, plan.seed, plan.role, plan.id_prefix);
  fs::create_directories(out_dir);
  ingest::save_dataset(out_dir / "dataset.jsonl", dataset);
  write_json_file(out_dir / "rulebook.json", synth::derive_rulebook(plan.planted).to_json());

  Json truth = Json::array();
  for (const auto& plant : plan.planted) {
    Json row = plant.to_json();
    row["feature_id"] = slug_from_name(plant.feature_name);
    const std::size_t n = plant.target_n1 + plant.target_n0;
    row["delta_sr"] = n < plan.population.total()
                          ? Json(synth::expected_delta_sr(plant, plan.population))
                          : Json(nullptr);
    truth.push_back(std::move(row));
  }
  write_json_file(out_dir / "ground_truth.json", truth);
}

// ---------------------------------------------------------------------------
// Stage runners (shared by the staged subcommands and `pipeline`)
// ---------------------------------------------------------------------------

struct DiscoveryArtifacts {
  agents::MasterList master;
  std::vector<backend::AgentTranscript> transcripts;
};

inline DiscoveryArtifacts run_discovery(const RunConfig& config, const Dataset& discovery,
                                        backend::Provider& provider) {
  const agents::PromptCondition condition = load_condition(config);
  const std::vector<EntityRecord> redacted = redact_labels(discovery);
  const std::vector<agents::SerializedBatch> batches =
      agents::build_discovery_batches(redacted, config.discovery_batch_size);

  std::vector<agents::DiscoveryResult> results = parallel_map<agents::DiscoveryResult>(
      batches.size(), config.parallelism,
      [&](std::size_t i) { return agents::discover_features(batches[i], condition, provider); });

  DiscoveryArtifacts artifacts;
  artifacts.master.condition = config.condition;
  for (auto& result : results) {
    artifacts.master.features =
        agents::accumulate_master_list(std::move(artifacts.master.features), result.features);
    for (auto& t : result.transcripts) artifacts.transcripts.push_back(std::move(t));
  }
  return artifacts;
}

inline Dataset load_required_dataset(const std::string& path, DatasetRole role,
                                     const char* which) {
  if (path.empty()) {
    throw Error(ErrorCode::ConfigError, std::string("missing ") + which + " dataset path");
  }
  if (!fs::exists(path)) {
    throw Error(ErrorCode::ConfigError,
                std::string(which) + " dataset does not exist: " + path);
  }
  return ingest::load_dataset(path, role);
}

inline backend::CostLedger ledger_of(const std::vector<backend::AgentTranscript>& transcripts) {
  backend::CostLedger ledger;
  for (const auto& t : transcripts) {
    ledger.add(t, backend::stage_for_schema(t.request.schema_id));
  }
  return ledger;
}

/// discover: master list + cassette + ledger for the discovery stage alone.
inline void cmd_discover(const RunConfig& config) {
  const Dataset discovery =
      load_required_dataset(config.discovery_dataset, DatasetRole::Discovery, "discovery");
  auto provider = make_provider(config);
  DiscoveryArtifacts artifacts = run_discovery(config, discovery, *provider);
  const fs::path out(config.output_dir);
  fs::create_directories(out);
  write_text_file(out / "prompt_template.txt", load_condition(config).template_text);
  write_json_file(out / "master_list.json", artifacts.master.to_json());
  backend::save_cassette(out / "cassette_discovery.json", artifacts.transcripts);
  write_json_file(out / "ledger_discovery.json", ledger_of(artifacts.transcripts).to_json());
}

/// consolidate: one conservative pass over a stored master list.
inline void cmd_consolidate(const RunConfig& config, const fs::path& master_path) {
  agents::MasterList master = agents::MasterList::from_json(read_json_file(master_path));
  auto provider = make_provider(config);
  agents::ConsolidationResult result =
      agents::consolidate(master.features, *provider, config.consolidation_batch_size);
  const fs::path out(config.output_dir);
  fs::create_directories(out);
  agents::MasterList consolidated{master.condition, std::move(result.features)};
  write_json_file(out / "consolidated_list.json", consolidated.to_json());
  Json decisions = Json::array();
  for (const auto& d : result.decisions) decisions.push_back(d.to_json());
  write_json_file(out / "merge_decisions.json", decisions);
  backend::save_cassette(out / "cassette_consolidation.json", result.transcripts);
  write_json_file(out / "ledger_consolidation.json", ledger_of(result.transcripts).to_json());
}

/// score: apply a stored feature list to a dataset and compute stats.
inline void cmd_score(const RunConfig& config, const fs::path& features_path,
                      const std::string& dataset_path, DatasetRole role) {
  const std::vector<FeatureSpec> features = load_feature_list(features_path);
  const Dataset dataset = load_required_dataset(dataset_path, role, dataset_role_name(role));
  auto provider = make_provider(config);
  agents::ScoringResult result = agents::score_features(
      features, dataset, *provider, config.scoring_feature_batch, config.scoring_record_batch);
  const fs::path out(config.output_dir);
  fs::create_directories(out);
  write_json_file(out / "assignments.json", result.matrix.to_json());
  const std::vector<FeatureStats> stats = metrics::stats_for_matrix(result.matrix, dataset);
  write_json_file(out / "stats.json", metrics::stats_to_json(stats));
  write_text_file(out / "stats.csv", metrics::stats_to_csv(stats));
  backend::save_cassette(out / "cassette_scoring.json", result.transcripts);
  write_json_file(out / "ledger_scoring.json", ledger_of(result.transcripts).to_json());
}

/// evaluate: leakage audit + frozen-feature application to the held-out set.
inline void cmd_evaluate(const RunConfig& config, const fs::path& frozen_path,
                         const std::vector<fs::path>& audit_cassettes) {
  const eval::FrozenFeatureSet frozen =
      eval::FrozenFeatureSet::from_json(read_json_file(frozen_path));
  const Dataset heldout =
      load_required_dataset(config.heldout_dataset, DatasetRole::Heldout, "heldout");
  std::vector<backend::AgentTranscript> discovery_transcripts;
  for (const auto& path : audit_cassettes) {
    for (auto& t : backend::load_cassette(path)) discovery_transcripts.push_back(std::move(t));
  }
  const fs::path out(config.output_dir);
  fs::create_directories(out);
  const eval::AuditReport audit = eval::audit_leakage(discovery_transcripts, heldout);
  write_json_file(out / "audit_report.json", audit.to_json());
  auto provider = make_provider(config);
  eval::HeldoutEvaluation evaluation = eval::evaluate_heldout(
      frozen, heldout, *provider, &discovery_transcripts, config.scoring_feature_batch,
      config.scoring_record_batch);
  write_json_file(out / "assignments_heldout.json", evaluation.matrix.to_json());
  write_json_file(out / "stats_heldout.json", metrics::stats_to_json(evaluation.stats));
  write_text_file(out / "stats_heldout.csv", metrics::stats_to_csv(evaluation.stats));
  write_json_file(out / "heldout_evaluation.json",
                  Json{{"freeze_checksum", evaluation.freeze_checksum},
                       {"population", Json{{"n1", heldout.n1}, {"n0", heldout.n0}}},
                       {"stats", metrics::stats_to_json(evaluation.stats)}});
  backend::save_cassette(out / "cassette_scoring_heldout.json", evaluation.transcripts);
  write_json_file(out / "ledger_scoring_heldout.json", ledger_of(evaluation.transcripts).to_json());
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

struct PipelineArtifacts {
  std::string run_id;
  agents::MasterList master;
  std::vector<agents::MergeDecision> decisions;
  eval::FrozenFeatureSet frozen;
  std::vector<FeatureStats> heldout_stats;
  metrics::RunSummary summary;
  backend::CostLedger ledger;
  std::vector<backend::AgentTranscript> transcripts;
};

/// Deterministic run identity: hashes the run-relevant configuration plus the
/// dataset contents — never wall-clock, paths, or the provider kind (a replay
/// of a run must reproduce the run's artifacts, including its id).
inline std::string derive_run_id(const RunConfig& config, const Dataset& discovery,
                                 const Dataset& heldout) {
  Json material = Json{{"condition", condition_name(config.condition)},
                       {"seed", config.seed},
                       {"batch_sizes",
                        Json{{"discovery", config.discovery_batch_size},
                             {"scoring_features", config.scoring_feature_batch},
                             {"scoring_records", config.scoring_record_batch},
                             {"consolidation", config.consolidation_batch_size}}},
                       {"min_support_count", config.min_support_count},
                       {"top_k", config.top_k},
                       {"discovery_sha", sha256_hex(ingest::dataset_to_jsonl(discovery))},
                       {"heldout_sha", sha256_hex(ingest::dataset_to_jsonl(heldout))}};
  return sha256_hex(material.dump()).substr(0, 12);
}

/// Full run: discover -> consolidate -> freeze -> audit -> score -> metrics.
/// Every stage's artifacts land in output_dir as they complete; a failure
/// leaves them in place plus a resume.json naming the failed stage.
inline PipelineArtifacts cmd_pipeline(const RunConfig& config) {
  const fs::path out(config.output_dir);
  fs::create_directories(out);

  std::vector<std::string> completed;
  std::string current_stage = "ingest";
  auto fail_marker = [&](const std::string& error) {
    write_json_file(out / "resume.json", Json{{"completed_stages", completed},
                                              {"failed_stage", current_stage},
                                              {"error", error}});
  };

  try {
    // Ingest: either a pre-split pair or one pool split here.
    Dataset discovery;
    Dataset heldout;
    if (!config.pool_dataset.empty()) {
      const Dataset pool =
          load_required_dataset(config.pool_dataset, DatasetRole::Discovery, "pool");
      ingest::ExperimentSplit split =
          ingest::stratified_split(pool, config.discovery_fraction, config.seed);
      ingest::materialize_split(split, out);
      discovery = std::move(split.discovery);
      heldout = std::move(split.heldout);
    } else {
      discovery =
          load_required_dataset(config.discovery_dataset, DatasetRole::Discovery, "discovery");
      heldout = load_required_dataset(config.heldout_dataset, DatasetRole::Heldout, "heldout");
    }
    ingest::check_disjoint(discovery, heldout);
    completed.push_back("ingest");

    PipelineArtifacts artifacts;
    artifacts.run_id = derive_run_id(config, discovery, heldout);
    current_stage = "provider";
    auto provider = make_provider(config);

    current_stage = "discovery";
    DiscoveryArtifacts discovered = run_discovery(config, discovery, *provider);
    artifacts.master = std::move(discovered.master);
    artifacts.transcripts = std::move(discovered.transcripts);
    write_text_file(out / "prompt_template.txt", load_condition(config).template_text);
    write_json_file(out / "master_list.json", artifacts.master.to_json());
    completed.push_back("discovery");

    current_stage = "consolidation";
    agents::ConsolidationResult consolidated = agents::consolidate(
        artifacts.master.features, *provider, config.consolidation_batch_size);
    artifacts.decisions = std::move(consolidated.decisions);
    for (auto& t : consolidated.transcripts) artifacts.transcripts.push_back(std::move(t));
    agents::MasterList consolidated_list{config.condition, consolidated.features};
    write_json_file(out / "consolidated_list.json", consolidated_list.to_json());
    Json decisions = Json::array();
    for (const auto& d : artifacts.decisions) decisions.push_back(d.to_json());
    write_json_file(out / "merge_decisions.json", decisions);
    completed.push_back("consolidation");

    current_stage = "freeze";
    artifacts.frozen = eval::freeze(consolidated.features, artifacts.run_id);
    write_json_file(out / "frozen_features.json", artifacts.frozen.to_json());
    completed.push_back("freeze");

    current_stage = "audit";
    const eval::AuditReport audit = eval::audit_leakage(artifacts.transcripts, heldout);
    write_json_file(out / "audit_report.json", audit.to_json());
    if (!audit.passed()) {
      throw Error(ErrorCode::LeakageDetected,
                  "held-out entity '" + audit.violations.front().offending_entity_id +
                      "' leaked into transcript '" + audit.violations.front().transcript_id + "'");
    }
    completed.push_back("audit");

    current_stage = "scoring";
    if (config.score_discovery) {
      agents::ScoringResult scored =
          agents::score_features(artifacts.frozen.features, discovery, *provider,
                                 config.scoring_feature_batch, config.scoring_record_batch,
                                 "score_disc");
      write_json_file(out / "assignments_discovery.json", scored.matrix.to_json());
      const std::vector<FeatureStats> stats = metrics::stats_for_matrix(scored.matrix, discovery);
      write_json_file(out / "stats_discovery.json", metrics::stats_to_json(stats));
      write_text_file(out / "stats_discovery.csv", metrics::stats_to_csv(stats));
      for (auto& t : scored.transcripts) artifacts.transcripts.push_back(std::move(t));
    }
    eval::HeldoutEvaluation evaluation = eval::evaluate_heldout(
        artifacts.frozen, heldout, *provider, &artifacts.transcripts,
        config.scoring_feature_batch, config.scoring_record_batch);
    artifacts.heldout_stats = evaluation.stats;
    write_json_file(out / "assignments_heldout.json", evaluation.matrix.to_json());
    write_json_file(out / "stats_heldout.json", metrics::stats_to_json(evaluation.stats));
    write_text_file(out / "stats_heldout.csv", metrics::stats_to_csv(evaluation.stats));
    for (auto& t : evaluation.transcripts) artifacts.transcripts.push_back(std::move(t));
    completed.push_back("scoring");

    current_stage = "metrics";
    artifacts.ledger = ledger_of(artifacts.transcripts);
    const std::vector<FeatureStats> filtered =
        metrics::filter_by_support(artifacts.heldout_stats, config.min_support_count);
    const std::vector<FeatureStats> ranked = metrics::rank_top_k(filtered, config.top_k);
    metrics::SummaryStats summary_stats;
    if (!ranked.empty()) summary_stats = metrics::summarize(ranked);
    artifacts.summary.condition = condition_name(config.condition);
    artifacts.summary.mean_delta_sr = summary_stats.mean;
    artifacts.summary.median_delta_sr = summary_stats.median;
    artifacts.summary.feature_count = artifacts.frozen.features.size();
    artifacts.summary.total_cost = artifacts.ledger.total_cost();

    Json summary = artifacts.summary.to_json();
    summary["run_id"] = artifacts.run_id;
    summary["freeze_checksum"] = artifacts.frozen.freeze_checksum;
    summary["population"] = Json{{"n1", heldout.n1}, {"n0", heldout.n0}};
    summary["min_support_count"] = config.min_support_count;
    summary["top_k"] = config.top_k;
    summary["ranked_count"] = ranked.size();
    // Backtracking bookkeeping: where the agent's abandoned ideas fell.
    {
      std::map<std::string, std::size_t> causes = {
          {agents::rejection_cause_name(agents::RejectionCause::ProxyRisk), 0},
          {agents::rejection_cause_name(agents::RejectionCause::Leakage), 0},
          {agents::rejection_cause_name(agents::RejectionCause::ObservabilityFailure), 0},
          {agents::rejection_cause_name(agents::RejectionCause::CausalAmbiguity), 0},
          {agents::rejection_cause_name(agents::RejectionCause::Other), 0},
      };
      for (const auto& feature : artifacts.master.features) {
        for (const auto& idea : feature.abandoned_ideas) {
          causes[agents::rejection_cause_name(agents::classify_rejection_cause(idea.reason))]++;
        }
      }
      Json histogram = Json::object();
      for (const auto& [cause, count] : causes) histogram[cause] = count;
      summary["abandoned_idea_causes"] = histogram;
    }
    Json top = Json::array();
    for (const auto& s : ranked) {
      top.push_back(Json{{"feature_id", s.feature_id},
                         {"n1", s.n1},
                         {"n0", s.n0},
                         {"delta_sr", s.delta_sr ? Json(*s.delta_sr) : Json(nullptr)}});
    }
    summary["top_features"] = top;
    write_json_file(out / "summary.json", summary);

    backend::save_cassette(out / "cassette.json", artifacts.transcripts);
    write_json_file(out / "cost_ledger.json", artifacts.ledger.to_json());
    completed.push_back("metrics");

    std::error_code ec;
    fs::remove(out / "resume.json", ec);  // success clears any stale marker
    return artifacts;
  } catch (const Error& e) {
    fail_marker(e.what());
    throw Error(e.code(), "stage '" + current_stage + "': " + e.message());
  } catch (const std::exception& e) {
    fail_marker(e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

inline std::vector<FeatureStats> load_stats_file(const fs::path& path) {
  if (path.extension() == ".csv") {
    return metrics::stats_from_csv(read_text_file(path));
  }
  return metrics::stats_from_json(read_json_file(path));
}

namespace detail {

inline std::string fixed3(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", value);
  return buf;
}

}  // namespace detail

/// Renders a ranked stats table. `extended` adds precision/lift/support
/// columns; values print at 3 decimals.
inline std::string render_stats_table(const std::vector<FeatureStats>& ranked, bool extended) {
  std::size_t name_width = 10;
  for (const auto& s : ranked) name_width = std::max(name_width, s.feature_id.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(name_width) + 2) << "feature_id"
      << std::right << std::setw(6) << "n1" << std::setw(6) << "n0" << std::setw(10) << "delta_sr";
  if (extended) {
    out << std::setw(11) << "precision" << std::setw(8) << "lift" << std::setw(9) << "support";
  }
  out << "\n";
  for (const auto& s : ranked) {
    out << std::left << std::setw(static_cast<int>(name_width) + 2) << s.feature_id << std::right
        << std::setw(6) << s.n1 << std::setw(6) << s.n0 << std::setw(10)
        << (s.delta_sr ? detail::fixed3(*s.delta_sr) : "-");
    if (extended) {
      out << std::setw(11) << detail::fixed3(s.precision) << std::setw(8) << detail::fixed3(s.lift)
          << std::setw(9) << detail::fixed3(s.support);
    }
    out << "\n";
  }
  return out.str();
}

struct ReportOptions {
  std::size_t top_k = 10;
  std::size_t min_support_count = 0;  // 0 = report whatever the file holds
  bool extended = false;
  std::string csv_out;
};

/// report: ranked tables for each stats file, plain text to `sink`.
inline void cmd_report(const std::vector<fs::path>& stats_paths, const ReportOptions& options,
                       std::ostream& sink) {
  if (!options.csv_out.empty() && stats_paths.size() > 1) {
    throw Error(ErrorCode::ConfigError, "--csv-out takes a single --stats file");
  }
  for (const auto& path : stats_paths) {
    std::vector<FeatureStats> stats = load_stats_file(path);
    if (options.min_support_count > 0) {
      stats = metrics::filter_by_support(stats, options.min_support_count);
    }
    const std::vector<FeatureStats> ranked = metrics::rank_top_k(stats, options.top_k);
    sink << path.string() << "\n";
    sink << render_stats_table(ranked, options.extended);
    sink << "\n";
    if (!options.csv_out.empty()) {
      write_text_file(options.csv_out, metrics::stats_to_csv(ranked));
    }
  }
}

/// report --compare: two summary files side by side with relative deltas.
inline void cmd_compare(const fs::path& a_path, const fs::path& b_path, std::ostream& sink) {
  const metrics::RunSummary a = metrics::RunSummary::from_json(read_json_file(a_path));
  const metrics::RunSummary b = metrics::RunSummary::from_json(read_json_file(b_path));
  const metrics::ComparisonReport report = metrics::compare_conditions(a, b);
  auto pct = [](double x) { return detail::fixed3(100.0 * x) + "%"; };
  sink << std::left << std::setw(26) << "metric" << std::setw(14) << a.condition << std::setw(14)
       << b.condition << "\n";
  sink << std::left << std::setw(26) << "mean_delta_sr" << std::setw(14)
       << detail::fixed3(a.mean_delta_sr) << std::setw(14) << detail::fixed3(b.mean_delta_sr)
       << "\n";
  sink << std::left << std::setw(26) << "median_delta_sr" << std::setw(14)
       << detail::fixed3(a.median_delta_sr) << std::setw(14) << detail::fixed3(b.median_delta_sr)
       << "\n";
  sink << std::left << std::setw(26) << "feature_count" << std::setw(14) << a.feature_count
       << std::setw(14) << b.feature_count << "\n";
  sink << std::left << std::setw(26) << "total_cost" << std::setw(14) << a.total_cost
       << std::setw(14) << b.total_cost << "\n";
  sink << "mean uplift:             " << pct(report.mean_uplift()) << "\n";
  sink << "feature count reduction: " << pct(report.feature_count_reduction()) << "\n";
  sink << "cost reduction:          " << pct(report.cost_reduction()) << "\n";
}

}  // namespace cofee::cli
