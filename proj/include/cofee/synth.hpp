#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cofee/agents.hpp"
#include "cofee/core.hpp"
#include "cofee/errors.hpp"
#include "cofee/metrics.hpp"
#include "cofee/mock.hpp"
#include "cofee/util.hpp"

namespace cofee::synth {

/// A feature planted into a generated population: exactly target_n1
/// successful and target_n0 unsuccessful records carry the trigger token.
struct PlantedFeature {
  std::string feature_name;
  std::string trigger_token;
  std::size_t target_n1 = 0;
  std::size_t target_n0 = 0;

  Json to_json() const {
    return Json{{"feature_name", feature_name},
                {"trigger_token", trigger_token},
                {"target_n1", target_n1},
                {"target_n0", target_n0}};
  }

  static PlantedFeature from_json(const Json& j) {
    PlantedFeature p;
    try {
      p.feature_name = j.at("feature_name").get<std::string>();
      p.trigger_token = j.at("trigger_token").get<std::string>();
      p.target_n1 = j.at("target_n1").get<std::size_t>();
      p.target_n0 = j.at("target_n0").get<std::size_t>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("bad planted feature: ") + e.what());
    }
    return p;
  }
};

/// The plant's ground-truth success-rate delta in the target population.
inline double expected_delta_sr(const PlantedFeature& plant, metrics::PopulationCounts pop) {
  return metrics::delta_sr(plant.target_n1, plant.target_n0, pop);
}

namespace detail {

// Filler attribute vocabulary. Trigger tokens are expected to be nonsense
// words ("zqfeat7"-style); generation re-scans the output and rejects any
// plan whose tokens collide with this text.
inline const std::array<std::string_view, 12>& backgrounds() {
  static const std::array<std::string_view, 12> kValues = {
      "software engineering", "product management", "sales", "research science",
      "mechanical engineering", "finance", "design", "operations",
      "data analysis", "marketing", "consulting", "biotech research"};
  return kValues;
}

inline const std::array<std::string_view, 10>& roles() {
  static const std::array<std::string_view, 10> kValues = {
      "ceo", "cto", "coo", "vp engineering", "head of product",
      "founding engineer", "chief scientist", "cfo", "head of growth", "advisor"};
  return kValues;
}

inline const std::array<std::string_view, 10>& sectors() {
  static const std::array<std::string_view, 10> kValues = {
      "fintech", "healthcare", "logistics", "developer tools", "climate",
      "education", "retail", "security", "robotics", "media"};
  return kValues;
}

inline const std::array<std::string_view, 6>& funding_stages() {
  static const std::array<std::string_view, 6> kValues = {"pre-seed", "seed",   "series a",
                                                          "series b", "bridge", "bootstrapped"};
  return kValues;
}

inline const std::array<std::string_view, 16>& note_words() {
  static const std::array<std::string_view, 16> kValues = {
      "shipped",  "scaled",   "pivoted", "launched", "hired",    "partnered",
      "expanded", "iterated", "raised",  "migrated", "acquired", "rebuilt",
      "audited",  "profiled", "tested",  "deployed"};
  return kValues;
}

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& values, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dist(0, N - 1);
  return values[dist(rng)];
}

}  // namespace detail

/// Deterministic synthetic population with planted features at exact
/// class-conditional counts. The generated dataset is re-scanned before it is
/// returned; any token-count interference fails the plan instead of silently
/// producing a population that disagrees with its ground truth.
inline Dataset generate_population(metrics::PopulationCounts pop,
                                   const std::vector<PlantedFeature>& planted, std::uint64_t seed,
                                   DatasetRole role = DatasetRole::Discovery,
                                   const std::string& id_prefix = "E") {
  if (pop.total() == 0) throw Error(ErrorCode::InfeasiblePlan, "population is empty");
  std::unordered_set<std::string> tokens;
  for (const auto& plant : planted) {
    if (plant.target_n1 > pop.n1 || plant.target_n0 > pop.n0) {
      throw Error(ErrorCode::InfeasiblePlan,
                  "plant '" + plant.feature_name + "' wants more records than the population has");
    }
    if (plant.target_n1 + plant.target_n0 == 0) {
      throw Error(ErrorCode::InfeasiblePlan,
                  "plant '" + plant.feature_name + "' is never exhibited; it cannot be recovered");
    }
    if (plant.trigger_token.empty() || !tokens.insert(plant.trigger_token).second) {
      throw Error(ErrorCode::InfeasiblePlan,
                  "trigger tokens must be non-empty and pairwise distinct");
    }
  }

  std::mt19937_64 rng(seed);
  const std::size_t total = pop.total();
  int width = 1;
  for (std::size_t v = total; v >= 10; v /= 10) ++width;
  if (width < 4) width = 4;

  std::vector<EntityRecord> records;
  records.reserve(total);
  for (std::size_t i = 0; i < total; ++i) {
    EntityRecord record;
    record.entity_id = id_prefix + zero_padded(i + 1, width);
    std::string notes = std::string(detail::pick(detail::note_words(), rng)) + " " +
                        std::string(detail::pick(detail::note_words(), rng)) + " " +
                        std::string(detail::pick(detail::note_words(), rng));
    record.attributes = Json{{"background", std::string(detail::pick(detail::backgrounds(), rng))},
                             {"roles", std::string(detail::pick(detail::roles(), rng))},
                             {"sector", std::string(detail::pick(detail::sectors(), rng))},
                             {"funding_stage", std::string(detail::pick(detail::funding_stages(), rng))},
                             {"notes", notes}};
    record.outcome = i < pop.n1 ? Outcome::Success : Outcome::Failure;
    records.push_back(std::move(record));
  }

  std::vector<std::size_t> success_rows(pop.n1);
  std::vector<std::size_t> failure_rows(pop.n0);
  for (std::size_t i = 0; i < pop.n1; ++i) success_rows[i] = i;
  for (std::size_t i = 0; i < pop.n0; ++i) failure_rows[i] = pop.n1 + i;
  for (const auto& plant : planted) {
    std::shuffle(success_rows.begin(), success_rows.end(), rng);
    std::shuffle(failure_rows.begin(), failure_rows.end(), rng);
    for (std::size_t i = 0; i < plant.target_n1; ++i) {
      auto& notes = records[success_rows[i]].attributes.at("notes").get_ref<std::string&>();
      notes += " " + plant.trigger_token;
    }
    for (std::size_t i = 0; i < plant.target_n0; ++i) {
      auto& notes = records[failure_rows[i]].attributes.at("notes").get_ref<std::string&>();
      notes += " " + plant.trigger_token;
    }
  }

  std::shuffle(records.begin(), records.end(), rng);

  // Ground-truth self-check: the scan oracle must reproduce the plan exactly.
  for (const auto& plant : planted) {
    std::size_t seen1 = 0;
    std::size_t seen0 = 0;
    for (const auto& record : records) {
      if (record.attributes.dump().find(plant.trigger_token) == std::string::npos) continue;
      if (*record.outcome == Outcome::Success) {
        ++seen1;
      } else {
        ++seen0;
      }
    }
    if (seen1 != plant.target_n1 || seen0 != plant.target_n0) {
      throw Error(ErrorCode::InfeasiblePlan,
                  "token '" + plant.trigger_token + "' interferes with other plan content (" +
                      std::to_string(seen1) + "/" + std::to_string(seen0) + " vs requested " +
                      std::to_string(plant.target_n1) + "/" + std::to_string(plant.target_n0) + ")");
    }
  }

  return validate_dataset(std::move(records), role);
}

/// Rulebook whose discovery rules emit one feature per plant and whose
/// scoring behavior tags exactly the token-carrying entities.
inline backend::MockRulebook derive_rulebook(const std::vector<PlantedFeature>& planted) {
  std::unordered_set<std::string> seen;
  backend::MockRulebook book;
  const auto& categories = agents::subgoal_categories();
  for (std::size_t i = 0; i < planted.size(); ++i) {
    const PlantedFeature& plant = planted[i];
    if (!seen.insert(plant.trigger_token).second) {
      throw Error(ErrorCode::DuplicateTrigger,
                  "trigger token '" + plant.trigger_token + "' used by more than one plant");
    }
    backend::MockDiscoveryRule rule;
    rule.trigger_token = plant.trigger_token;
    rule.feature_name = plant.feature_name;
    rule.subgoal = std::string(categories[i % categories.size()]);
    rule.causal_mechanism =
        "Records whose notes mention '" + plant.trigger_token + "' describe a shared behavior";
    rule.definition = "The record notes contain the marker token '" + plant.trigger_token + "'";
    rule.computation_logic = "present := contains(attributes.notes, \"" + plant.trigger_token + "\")";
    static const std::array<std::string_view, 4> kReasons = {
        "proxy risk: frequency correlates with profile length",
        "leakage: value only observable after the outcome",
        "observability failure: not derivable from the given attributes",
        "causal ambiguity: direction of effect unclear",
    };
    rule.abandoned_ideas.emplace_back(
        "count raw mentions of '" + plant.trigger_token + "' instead of a flag",
        std::string(kReasons[i % kReasons.size()]));
    book.discovery.push_back(std::move(rule));
  }
  return book;
}

/// Generation plan as persisted by the CLI.
struct SynthPlan {
  metrics::PopulationCounts population;
  std::vector<PlantedFeature> planted;
  std::uint64_t seed = 0;
  DatasetRole role = DatasetRole::Discovery;
  std::string id_prefix = "E";

  Json to_json() const {
    Json plants = Json::array();
    for (const auto& p : planted) plants.push_back(p.to_json());
    return Json{{"population", Json{{"n1", population.n1}, {"n0", population.n0}}},
                {"seed", seed},
                {"role", dataset_role_name(role)},
                {"id_prefix", id_prefix},
                {"planted", plants}};
  }

  static SynthPlan from_json(const Json& j) {
    SynthPlan plan;
    try {
      plan.population.n1 = j.at("population").at("n1").get<std::size_t>();
      plan.population.n0 = j.at("population").at("n0").get<std::size_t>();
      plan.seed = j.at("seed").get<std::uint64_t>();
      plan.role = dataset_role_from_name(j.value("role", "discovery"));
      plan.id_prefix = j.value("id_prefix", "E");
      for (const auto& p : j.at("planted")) plan.planted.push_back(PlantedFeature::from_json(p));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("bad synth plan: ") + e.what());
    }
    return plan;
  }
};

}  // namespace cofee::synth
