#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cofee/cli.hpp"
#include "cofee/synth.hpp"
#include "test_support.hpp"

namespace cofee {
namespace {

namespace fs = std::filesystem;
using cofee::testing::TempDir;
using cofee::testing::snapshot_dir;

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::vector<std::string>& args, const fs::path& scratch) {
  const fs::path out_file = scratch / "stdout.txt";
  const fs::path err_file = scratch / "stderr.txt";
  std::string command = COFEE_CLI_PATH;
  for (const auto& arg : args) command += " '" + arg + "'";
  command += " >'" + out_file.string() + "' 2>'" + err_file.string() + "'";
  const int status = std::system(command.c_str());
  CliResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  result.out = read_text_file(out_file);
  result.err = read_text_file(err_file);
  return result;
}

synth::SynthPlan small_plan(DatasetRole role, const std::string& prefix, std::uint64_t seed) {
  synth::SynthPlan plan;
  plan.population = {8, 12};
  plan.seed = seed;
  plan.role = role;
  plan.id_prefix = prefix;
  plan.planted = {{"signal_alpha_flag", "zqca", 5, 2},
                  {"signal_beta_flag", "zqcb", 2, 6},
                  {"signal_gamma_flag", "zqcc", 4, 4}};
  return plan;
}

/// Writes datasets, rulebook, and a ready-to-run pipeline config; returns the
/// config path.
fs::path prepare_run(const fs::path& dir, const std::string& condition = "cognitive") {
  const auto plan_d = small_plan(DatasetRole::Discovery, "D", 101);
  const auto plan_h = small_plan(DatasetRole::Heldout, "H", 202);
  ingest::save_dataset(dir / "discovery.jsonl",
                       synth::generate_population(plan_d.population, plan_d.planted, plan_d.seed,
                                                  plan_d.role, plan_d.id_prefix));
  ingest::save_dataset(dir / "heldout.jsonl",
                       synth::generate_population(plan_h.population, plan_h.planted, plan_h.seed,
                                                  plan_h.role, plan_h.id_prefix));
  write_json_file(dir / "rulebook.json", synth::derive_rulebook(plan_d.planted).to_json());

  cli::RunConfig config;
  config.condition = condition_from_name(condition);
  config.provider = "mock";
  config.discovery_batch_size = 5;
  config.scoring_feature_batch = 2;
  config.min_support_count = 2;
  config.top_k = 5;
  config.discovery_dataset = (dir / "discovery.jsonl").string();
  config.heldout_dataset = (dir / "heldout.jsonl").string();
  config.rulebook = (dir / "rulebook.json").string();
  config.output_dir = (dir / "out").string();
  config.prices = backend::PriceTable{2.0, 6.0};
  const fs::path config_path = dir / "config.json";
  write_json_file(config_path, config.to_json());
  return config_path;
}

TEST(RunConfig, DefaultsMatchReferenceParameters) {
  const cli::RunConfig config;
  EXPECT_EQ(config.discovery_batch_size, 50u);
  EXPECT_EQ(config.scoring_feature_batch, 100u);
  EXPECT_EQ(config.min_support_count, 100u);
  EXPECT_EQ(config.top_k, 10u);
  EXPECT_EQ(config.condition, Condition::Cognitive);
  // round-trips through JSON with the same values
  const cli::RunConfig parsed = cli::RunConfig::from_json(config.to_json());
  EXPECT_EQ(parsed.to_json().dump(), config.to_json().dump());
  // an empty config object yields the same defaults
  const cli::RunConfig empty = cli::RunConfig::from_json(Json::object());
  EXPECT_EQ(empty.discovery_batch_size, 50u);
  EXPECT_EQ(empty.scoring_feature_batch, 100u);
  EXPECT_EQ(empty.min_support_count, 100u);
  EXPECT_EQ(empty.top_k, 10u);
}

TEST(LoadCondition, TemplateDirOverridesBuiltins) {
  TempDir dir;
  const std::string custom =
      agents::default_discovery_template(Condition::Cognitive) + "\nCUSTOM HOUSE RULES\n";
  write_text_file(dir.path() / "cognitive.txt", custom);
  cli::RunConfig config;
  config.condition = Condition::Cognitive;
  config.template_dir = dir.path().string();
  const auto condition = cli::load_condition(config);
  EXPECT_NE(condition.template_text.find("CUSTOM HOUSE RULES"), std::string::npos);

  // a template violating the condition's invariants is rejected
  write_text_file(dir.path() / "vanilla.txt",
                  agents::default_discovery_template(Condition::Cognitive));
  config.condition = Condition::Vanilla;
  try {
    cli::load_condition(config);
    FAIL() << "expected ConfigError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
}

TEST(RunDiscovery, ParallelismDoesNotChangeResults) {
  TempDir dir;
  const auto plan = small_plan(DatasetRole::Discovery, "D", 77);
  const Dataset dataset = synth::generate_population(plan.population, plan.planted, plan.seed,
                                                     plan.role, plan.id_prefix);
  write_json_file(dir.path() / "rulebook.json", synth::derive_rulebook(plan.planted).to_json());
  cli::RunConfig config;
  config.provider = "mock";
  config.discovery_batch_size = 3;  // several batches
  config.rulebook = (dir.path() / "rulebook.json").string();

  config.parallelism = 1;
  auto serial_provider = cli::make_provider(config);
  const auto serial = cli::run_discovery(config, dataset, *serial_provider);

  config.parallelism = 4;
  auto parallel_provider = cli::make_provider(config);
  const auto parallel = cli::run_discovery(config, dataset, *parallel_provider);

  EXPECT_EQ(serial.master.to_json().dump(), parallel.master.to_json().dump());
  ASSERT_EQ(serial.transcripts.size(), parallel.transcripts.size());
  for (std::size_t i = 0; i < serial.transcripts.size(); ++i) {
    EXPECT_EQ(serial.transcripts[i].to_json().dump(), parallel.transcripts[i].to_json().dump());
  }
}

TEST(Cli, NoSubcommandIsUsageError) {
  TempDir dir;
  EXPECT_EQ(run_cli({}, dir.path()).exit_code, 2);
  EXPECT_EQ(run_cli({"--bogus"}, dir.path()).exit_code, 2);
  EXPECT_EQ(run_cli({"report", "--no-such-flag"}, dir.path()).exit_code, 2);
  EXPECT_EQ(run_cli({"discover", "--seed", "abc"}, dir.path()).exit_code, 2);
  EXPECT_EQ(run_cli({"discover", "--seed", "12xy"}, dir.path()).exit_code, 2);
}

TEST(Cli, SynthWritesDatasetRulebookAndGroundTruth) {
  TempDir dir;
  const auto plan = small_plan(DatasetRole::Discovery, "D", 5);
  write_json_file(dir.path() / "plan.json", plan.to_json());
  const auto result = run_cli({"synth", "--plan", (dir.path() / "plan.json").string(), "--out",
                               (dir.path() / "synth").string()},
                              dir.path());
  EXPECT_EQ(result.exit_code, 0) << result.err;
  const Dataset dataset =
      ingest::load_dataset(dir.path() / "synth" / "dataset.jsonl", DatasetRole::Discovery);
  EXPECT_EQ(dataset.records.size(), 20u);
  const Json truth = read_json_file(dir.path() / "synth" / "ground_truth.json");
  ASSERT_EQ(truth.size(), 3u);
  EXPECT_EQ(truth[0].at("feature_id"), "signal_alpha_flag");
  EXPECT_TRUE(truth[0].at("delta_sr").is_number());
  const auto book =
      backend::MockRulebook::from_json(read_json_file(dir.path() / "synth" / "rulebook.json"));
  EXPECT_EQ(book.discovery.size(), 3u);
}

TEST(Cli, MissingDatasetPathExitsTwoAndNamesIt) {
  TempDir dir;
  write_json_file(dir.path() / "rb.json", backend::MockRulebook{}.to_json());
  const std::string missing = (dir.path() / "nope.jsonl").string();
  const auto result = run_cli({"discover", "--provider", "mock", "--rulebook",
                               (dir.path() / "rb.json").string(), "--discovery-dataset", missing,
                               "--out", (dir.path() / "out").string()},
                              dir.path());
  EXPECT_EQ(result.exit_code, 2);
  EXPECT_NE(result.err.find(missing), std::string::npos);
}

TEST(Cli, PipelineMockEndToEnd) {
  TempDir dir;
  const fs::path config = prepare_run(dir.path());
  const auto result = run_cli({"pipeline", "--config", config.string()}, dir.path());
  ASSERT_EQ(result.exit_code, 0) << result.err;

  const fs::path out = dir.path() / "out";
  for (const char* file :
       {"master_list.json", "consolidated_list.json", "merge_decisions.json",
        "frozen_features.json", "audit_report.json", "assignments_discovery.json",
        "stats_discovery.json", "stats_discovery.csv", "assignments_heldout.json",
        "stats_heldout.json", "stats_heldout.csv", "summary.json", "cassette.json",
        "cost_ledger.json"}) {
    EXPECT_TRUE(fs::exists(out / file)) << file;
  }
  EXPECT_FALSE(fs::exists(out / "resume.json"));

  const Json master = read_json_file(out / "master_list.json");
  EXPECT_EQ(master.at("condition"), "cognitive");
  EXPECT_EQ(master.at("features").size(), 3u);

  EXPECT_TRUE(read_json_file(out / "audit_report.json").empty());

  const Json summary = read_json_file(out / "summary.json");
  EXPECT_EQ(summary.at("feature_count").get<std::size_t>(), 3u);
  EXPECT_GT(summary.at("total_cost").get<double>(), 0.0);
  EXPECT_EQ(summary.at("population").at("n1"), 8);
  // summary.json is directly consumable as a comparison-side run summary
  const metrics::RunSummary parsed_summary = metrics::RunSummary::from_json(summary);
  EXPECT_EQ(parsed_summary.condition, "cognitive");
  EXPECT_EQ(parsed_summary.feature_count, 3u);

  // every request id in the run is unique
  const auto transcripts = backend::load_cassette(out / "cassette.json");
  std::set<std::string> request_ids;
  for (const auto& t : transcripts) {
    EXPECT_TRUE(request_ids.insert(t.request.request_id).second)
        << "duplicate request id " << t.request.request_id;
  }
  // the cost ledger totals equal the arithmetic sum over the cassette
  const Json ledger = read_json_file(out / "cost_ledger.json");
  double sum = 0.0;
  for (const auto& t : transcripts) sum += t.cost;
  EXPECT_NEAR(ledger.at("total").at("cost").get<double>(), sum, 1e-12);
  EXPECT_EQ(ledger.at("total").at("calls").get<std::size_t>(), transcripts.size());

  // discovery-set stats match the generation plan exactly
  const auto stats = metrics::stats_from_json(read_json_file(out / "stats_discovery.json"));
  ASSERT_EQ(stats.size(), 3u);
  for (const auto& s : stats) {
    if (s.feature_id == "signal_alpha_flag") {
      EXPECT_EQ(s.n1, 5u);
      EXPECT_EQ(s.n0, 2u);
    }
  }
}

TEST(Cli, VanillaConditionFlowsIntoArtifacts) {
  TempDir dir;
  const fs::path config = prepare_run(dir.path(), "vanilla");
  const auto result = run_cli({"pipeline", "--config", config.string()}, dir.path());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  const Json master = read_json_file(dir.path() / "out" / "master_list.json");
  EXPECT_EQ(master.at("condition"), "vanilla");
  for (const auto& f : master.at("features")) {
    EXPECT_EQ(f.at("condition"), "vanilla");
    EXPECT_EQ(f.at("subgoal"), "unspecified");
  }
}

TEST(Cli, ConditionOverrideBeatsConfig) {
  TempDir dir;
  const fs::path config = prepare_run(dir.path(), "cognitive");
  const auto result = run_cli(
      {"pipeline", "--config", config.string(), "--condition", "vanilla"}, dir.path());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  EXPECT_EQ(read_json_file(dir.path() / "out" / "master_list.json").at("condition"), "vanilla");
}

TEST(Cli, MockPipelineIsByteDeterministic) {
  TempDir dir;
  const fs::path config = prepare_run(dir.path());
  ASSERT_EQ(run_cli({"pipeline", "--config", config.string()}, dir.path()).exit_code, 0);
  const auto first = snapshot_dir(dir.path() / "out");
  ASSERT_EQ(run_cli({"pipeline", "--config", config.string()}, dir.path()).exit_code, 0);
  const auto second = snapshot_dir(dir.path() / "out");
  EXPECT_EQ(first, second);
  EXPECT_GT(first.size(), 10u);
}

TEST(Cli, ReplayReproducesRunArtifacts) {
  TempDir dir;
  const fs::path config_path = prepare_run(dir.path());
  ASSERT_EQ(run_cli({"pipeline", "--config", config_path.string()}, dir.path()).exit_code, 0);
  auto mock_snapshot = snapshot_dir(dir.path() / "out");

  cli::RunConfig replay_config = cli::load_run_config(config_path);
  replay_config.provider = "replay";
  replay_config.cassette = (dir.path() / "out" / "cassette.json").string();
  replay_config.output_dir = (dir.path() / "replay_out").string();
  const fs::path replay_config_path = dir.path() / "replay_config.json";
  write_json_file(replay_config_path, replay_config.to_json());

  ASSERT_EQ(run_cli({"pipeline", "--config", replay_config_path.string()}, dir.path()).exit_code, 0);
  auto replay_snapshot = snapshot_dir(dir.path() / "replay_out");

  // Two replay executions are byte-identical.
  ASSERT_EQ(run_cli({"pipeline", "--config", replay_config_path.string()}, dir.path()).exit_code, 0);
  EXPECT_EQ(replay_snapshot, snapshot_dir(dir.path() / "replay_out"));

  // Swapping the provider for replay leaves all downstream artifacts
  // byte-identical; only the cassette's provider tags differ.
  mock_snapshot.erase("cassette.json");
  replay_snapshot.erase("cassette.json");
  EXPECT_EQ(mock_snapshot, replay_snapshot);
}

TEST(Cli, StagedCommandsComposeLikePipeline) {
  TempDir dir;
  const fs::path config = prepare_run(dir.path());
  ASSERT_EQ(run_cli({"pipeline", "--config", config.string()}, dir.path()).exit_code, 0);
  const fs::path out = dir.path() / "out";

  // discover in a separate dir matches the pipeline's master list
  const auto discover = run_cli({"discover", "--config", config.string(), "--out",
                                 (dir.path() / "stage_d").string()},
                                dir.path());
  ASSERT_EQ(discover.exit_code, 0) << discover.err;
  EXPECT_EQ(read_text_file(dir.path() / "stage_d" / "master_list.json"),
            read_text_file(out / "master_list.json"));

  const auto consolidate = run_cli({"consolidate", "--config", config.string(), "--master",
                                    (dir.path() / "stage_d" / "master_list.json").string(), "--out",
                                    (dir.path() / "stage_c").string()},
                                   dir.path());
  ASSERT_EQ(consolidate.exit_code, 0) << consolidate.err;
  EXPECT_EQ(read_text_file(dir.path() / "stage_c" / "consolidated_list.json"),
            read_text_file(out / "consolidated_list.json"));

  const auto score = run_cli({"score", "--config", config.string(), "--features",
                              (out / "frozen_features.json").string(), "--dataset",
                              (dir.path() / "discovery.jsonl").string(), "--role", "discovery",
                              "--out", (dir.path() / "stage_s").string()},
                             dir.path());
  ASSERT_EQ(score.exit_code, 0) << score.err;
  EXPECT_EQ(read_text_file(dir.path() / "stage_s" / "stats.json"),
            read_text_file(out / "stats_discovery.json"));

  const auto evaluate = run_cli({"evaluate", "--config", config.string(), "--frozen",
                                 (out / "frozen_features.json").string(), "--audit-cassette",
                                 (out / "cassette.json").string(), "--out",
                                 (dir.path() / "stage_e").string()},
                                dir.path());
  ASSERT_EQ(evaluate.exit_code, 0) << evaluate.err;
  EXPECT_EQ(read_text_file(dir.path() / "stage_e" / "stats_heldout.json"),
            read_text_file(out / "stats_heldout.json"));
  EXPECT_TRUE(read_json_file(dir.path() / "stage_e" / "audit_report.json").empty());
}

TEST(Cli, ScoreDiscoveryFlagSkipsDiscoveryScoring) {
  TempDir dir;
  const fs::path config_path = prepare_run(dir.path());
  cli::RunConfig config = cli::load_run_config(config_path);
  config.score_discovery = false;
  write_json_file(config_path, config.to_json());
  ASSERT_EQ(run_cli({"pipeline", "--config", config_path.string()}, dir.path()).exit_code, 0);
  const fs::path out = dir.path() / "out";
  EXPECT_FALSE(fs::exists(out / "assignments_discovery.json"));
  EXPECT_FALSE(fs::exists(out / "stats_discovery.json"));
  EXPECT_TRUE(fs::exists(out / "stats_heldout.json"));
}

TEST(Cli, PoolSplitFlowWritesManifest) {
  TempDir dir;
  const auto plan = small_plan(DatasetRole::Discovery, "P", 9);
  synth::SynthPlan pool_plan = plan;
  pool_plan.population = {16, 24};
  pool_plan.planted = {{"signal_alpha_flag", "zqca", 10, 4}};
  ingest::save_dataset(dir.path() / "pool.jsonl",
                       synth::generate_population(pool_plan.population, pool_plan.planted,
                                                  pool_plan.seed, pool_plan.role,
                                                  pool_plan.id_prefix));
  write_json_file(dir.path() / "rulebook.json",
                  synth::derive_rulebook(pool_plan.planted).to_json());
  cli::RunConfig config;
  config.provider = "mock";
  config.pool_dataset = (dir.path() / "pool.jsonl").string();
  config.discovery_fraction = 0.5;
  config.seed = 3;
  config.discovery_batch_size = 5;
  config.min_support_count = 1;
  config.rulebook = (dir.path() / "rulebook.json").string();
  config.output_dir = (dir.path() / "out").string();
  write_json_file(dir.path() / "config.json", config.to_json());

  const auto result =
      run_cli({"pipeline", "--config", (dir.path() / "config.json").string()}, dir.path());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  const fs::path out = dir.path() / "out";
  EXPECT_TRUE(fs::exists(out / "split_manifest.json"));
  const auto manifest = ingest::SplitManifest::from_json(read_json_file(out / "split_manifest.json"));
  EXPECT_EQ(manifest.seed, 3u);
  EXPECT_EQ(sha256_hex(read_text_file(out / manifest.discovery_path)), manifest.discovery_sha);
}

TEST(Cli, FailedRunLeavesResumeMarkerSuccessClearsIt) {
  TempDir dir;
  const fs::path config_path = prepare_run(dir.path());
  // Corrupt the held-out dataset: a duplicated entity id fails validation.
  const std::string line =
      record_to_json(EntityRecord{"H0001", Json::object(), Outcome::Success}).dump();
  const fs::path good_heldout = dir.path() / "heldout.jsonl";
  const std::string good_bytes = read_text_file(good_heldout);
  write_text_file(good_heldout, line + "\n" + line + "\n");

  const auto failed = run_cli({"pipeline", "--config", config_path.string()}, dir.path());
  EXPECT_EQ(failed.exit_code, 4);
  EXPECT_NE(failed.err.find("stage 'ingest'"), std::string::npos) << failed.err;
  const fs::path marker = dir.path() / "out" / "resume.json";
  ASSERT_TRUE(fs::exists(marker));
  EXPECT_EQ(read_json_file(marker).at("failed_stage"), "ingest");

  write_text_file(good_heldout, good_bytes);
  ASSERT_EQ(run_cli({"pipeline", "--config", config_path.string()}, dir.path()).exit_code, 0);
  EXPECT_FALSE(fs::exists(marker));
}

TEST(Cli, ReportRendersTablesAndComparison) {
  TempDir dir;
  std::vector<FeatureStats> stats;
  for (const auto& row : cofee::testing::cognitive_top10()) {
    stats.push_back(metrics::extended_stats(row.n1, row.n0, cofee::testing::kRefPopulation,
                                            row.feature_id));
  }
  write_json_file(dir.path() / "stats.json", metrics::stats_to_json(stats));
  const auto result = run_cli({"report", "--stats", (dir.path() / "stats.json").string(),
                               "--extended", "--csv-out", (dir.path() / "ranked.csv").string()},
                              dir.path());
  ASSERT_EQ(result.exit_code, 0) << result.err;
  EXPECT_NE(result.out.find("top_university_education_flag"), std::string::npos);
  EXPECT_NE(result.out.find("0.328"), std::string::npos);
  EXPECT_NE(result.out.find("1.723"), std::string::npos);

  // rendered CSV parses back to the same values
  const auto reparsed = metrics::stats_from_csv(read_text_file(dir.path() / "ranked.csv"), 0.4);
  ASSERT_EQ(reparsed.size(), 10u);
  EXPECT_EQ(reparsed[0].feature_id, "top_university_education_flag");
  EXPECT_DOUBLE_EQ(*reparsed[0].delta_sr, *stats[0].delta_sr);

  write_json_file(dir.path() / "a.json", cofee::testing::cognitive_summary_fixture().to_json());
  write_json_file(dir.path() / "b.json", cofee::testing::vanilla_summary_fixture().to_json());
  const auto compare = run_cli({"report", "--compare", (dir.path() / "a.json").string(),
                                (dir.path() / "b.json").string()},
                               dir.path());
  ASSERT_EQ(compare.exit_code, 0) << compare.err;
  EXPECT_NE(compare.out.find("15.207%"), std::string::npos);
  EXPECT_NE(compare.out.find("53.308%"), std::string::npos);
}

TEST(Cli, ReportOnEmptyStatsSucceeds) {
  TempDir dir;
  write_text_file(dir.path() / "empty.json", "[]\n");
  const auto result =
      run_cli({"report", "--stats", (dir.path() / "empty.json").string()}, dir.path());
  EXPECT_EQ(result.exit_code, 0) << result.err;
}

TEST(Cli, ReplayMissExitsThree) {
  TempDir dir;
  const fs::path config_path = prepare_run(dir.path());
  cli::RunConfig config = cli::load_run_config(config_path);
  config.provider = "replay";
  backend::save_cassette(dir.path() / "empty_cassette.json", {});
  config.cassette = (dir.path() / "empty_cassette.json").string();
  write_json_file(dir.path() / "replay_config.json", config.to_json());
  const auto result =
      run_cli({"pipeline", "--config", (dir.path() / "replay_config.json").string()}, dir.path());
  EXPECT_EQ(result.exit_code, 3);
  EXPECT_NE(result.err.find("ReplayMiss"), std::string::npos);
}

}  // namespace
}  // namespace cofee
