#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cofee/cli.hpp"

namespace {

namespace fs = std::filesystem;

struct CommonArgs {
  std::string config_path;
  std::optional<std::string> condition;
  std::optional<std::string> provider;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> rulebook;
  std::optional<std::string> cassette;
  std::optional<std::string> discovery_dataset;
  std::optional<std::string> heldout_dataset;
};

void add_common_options(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "run config JSON file");
  cmd->add_option("--condition", [&args](const std::vector<std::string>& v) {
        args.condition = v.front();
        return true;
      },
      "cognitive|vanilla")
      ->type_name("TEXT");
  cmd->add_option("--provider", [&args](const std::vector<std::string>& v) {
        args.provider = v.front();
        return true;
      },
      "live|replay|mock")
      ->type_name("TEXT");
  cmd->add_option("--seed", [&args](const std::vector<std::string>& v) {
        try {
          std::size_t used = 0;
          args.seed = std::stoull(v.front(), &used);
          return used == v.front().size();
        } catch (const std::exception&) {
          return false;
        }
      },
      "split / generation seed")
      ->type_name("UINT");
  cmd->add_option("--out", [&args](const std::vector<std::string>& v) {
        args.out = v.front();
        return true;
      },
      "output directory")
      ->type_name("PATH");
  cmd->add_option("--rulebook", [&args](const std::vector<std::string>& v) {
        args.rulebook = v.front();
        return true;
      },
      "mock rulebook JSON")
      ->type_name("PATH");
  cmd->add_option("--cassette", [&args](const std::vector<std::string>& v) {
        args.cassette = v.front();
        return true;
      },
      "replay cassette JSON")
      ->type_name("PATH");
  cmd->add_option("--discovery-dataset", [&args](const std::vector<std::string>& v) {
        args.discovery_dataset = v.front();
        return true;
      },
      "discovery dataset (JSONL)")
      ->type_name("PATH");
  cmd->add_option("--heldout-dataset", [&args](const std::vector<std::string>& v) {
        args.heldout_dataset = v.front();
        return true;
      },
      "held-out dataset (JSONL)")
      ->type_name("PATH");
}

cofee::cli::RunConfig resolve_config(const CommonArgs& args) {
  cofee::cli::RunConfig config;
  if (!args.config_path.empty()) config = cofee::cli::load_run_config(args.config_path);
  if (args.condition) config.condition = cofee::condition_from_name(*args.condition);
  if (args.provider) config.provider = *args.provider;
  if (args.seed) config.seed = *args.seed;
  if (args.out) config.output_dir = *args.out;
  if (args.rulebook) config.rulebook = *args.rulebook;
  if (args.cassette) config.cassette = *args.cassette;
  if (args.discovery_dataset) config.discovery_dataset = *args.discovery_dataset;
  if (args.heldout_dataset) config.heldout_dataset = *args.heldout_dataset;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cofee: LLM feature discovery pipeline with reasoning-control conditions"};
  app.require_subcommand(1);

  CommonArgs discover_args;
  auto* discover = app.add_subcommand("discover", "run feature discovery (Agent 1)");
  add_common_options(discover, discover_args);

  CommonArgs consolidate_args;
  std::string master_path;
  auto* consolidate = app.add_subcommand("consolidate", "merge overlapping features (Agent 2)");
  add_common_options(consolidate, consolidate_args);
  consolidate->add_option("--master", master_path, "master list JSON");

  CommonArgs score_args;
  std::string features_path;
  std::string score_dataset;
  std::string score_role = "discovery";
  auto* score = app.add_subcommand("score", "assign features to entities (Agent 3)");
  add_common_options(score, score_args);
  score->add_option("--features", features_path, "feature list JSON")->required();
  score->add_option("--dataset", score_dataset, "dataset to score (JSONL)")->required();
  score->add_option("--role", score_role, "discovery|heldout");

  CommonArgs evaluate_args;
  std::string frozen_path;
  std::vector<std::string> audit_cassettes;
  auto* evaluate = app.add_subcommand("evaluate", "apply frozen features to the held-out set");
  add_common_options(evaluate, evaluate_args);
  evaluate->add_option("--frozen", frozen_path, "frozen feature set JSON")->required();
  evaluate->add_option("--audit-cassette", audit_cassettes,
                       "discovery/consolidation cassettes to audit for leakage");

  std::vector<std::string> stats_paths;
  cofee::cli::ReportOptions report_options;
  std::vector<std::string> compare_paths;
  auto* report = app.add_subcommand("report", "render ranked stats tables");
  report->add_option("--stats", stats_paths, "stats files (.json or .csv)");
  report->add_option("--top-k", report_options.top_k, "rows per table");
  report->add_option("--min-support", report_options.min_support_count,
                     "drop features below this n1+n0 before ranking");
  report->add_flag("--extended", report_options.extended, "add precision/lift/support columns");
  report->add_option("--csv-out", report_options.csv_out, "also write the ranked rows as CSV");
  report->add_option("--compare", compare_paths, "two summary.json files to compare")
      ->expected(2);

  CommonArgs pipeline_args;
  auto* pipeline = app.add_subcommand("pipeline", "full run: discover through metrics");
  add_common_options(pipeline, pipeline_args);

  std::string plan_path;
  std::string synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled population");
  synth->add_option("--plan", plan_path, "plan JSON file")->required();
  synth->add_option("--out", synth_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (discover->parsed()) {
      cofee::cli::cmd_discover(resolve_config(discover_args));
    } else if (consolidate->parsed()) {
      auto config = resolve_config(consolidate_args);
      fs::path master = master_path.empty() ? fs::path(config.output_dir) / "master_list.json"
                                            : fs::path(master_path);
      cofee::cli::cmd_consolidate(config, master);
    } else if (score->parsed()) {
      cofee::cli::cmd_score(resolve_config(score_args), features_path, score_dataset,
                            cofee::dataset_role_from_name(score_role));
    } else if (evaluate->parsed()) {
      std::vector<fs::path> cassettes(audit_cassettes.begin(), audit_cassettes.end());
      cofee::cli::cmd_evaluate(resolve_config(evaluate_args), frozen_path, cassettes);
    } else if (report->parsed()) {
      if (!compare_paths.empty()) {
        cofee::cli::cmd_compare(compare_paths[0], compare_paths[1], std::cout);
      }
      std::vector<fs::path> paths(stats_paths.begin(), stats_paths.end());
      cofee::cli::cmd_report(paths, report_options, std::cout);
    } else if (pipeline->parsed()) {
      cofee::cli::cmd_pipeline(resolve_config(pipeline_args));
    } else if (synth->parsed()) {
      cofee::cli::cmd_synth(plan_path, synth_out);
    }
  } catch (const cofee::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cofee::cli::exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
