#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cofee/errors.hpp"
#include "cofee/util.hpp"

namespace cofee {

// Serialized field names are part of the dataset file contract.
inline constexpr const char* kEntityIdKey = "entity_id";
inline constexpr const char* kAttributesKey = "attributes";
inline constexpr const char* kOutcomeKey = "outcome";
inline constexpr const char* kOutcomeSuccess = "success";
inline constexpr const char* kOutcomeFailure = "failure";

enum class Outcome { Success, Failure };

inline const char* outcome_name(Outcome o) {
  return o == Outcome::Success ? kOutcomeSuccess : kOutcomeFailure;
}

/// One founder/company profile. Attributes are an ordered JSON object of
/// text-or-number values; ordering is preserved so serialization is stable.
struct EntityRecord {
  std::string entity_id;
  Json attributes = Json::object();
  std::optional<Outcome> outcome;
};

/// Agent-facing form: entity_id and attributes only. The outcome key is never
/// written by this serializer, which is what keeps batch payloads label-blind.
inline Json record_to_redacted_json(const EntityRecord& record) {
  Json j = Json::object();
  j[kEntityIdKey] = record.entity_id;
  j[kAttributesKey] = record.attributes;
  return j;
}

inline Json record_to_json(const EntityRecord& record) {
  Json j = record_to_redacted_json(record);
  if (record.outcome) j[kOutcomeKey] = outcome_name(*record.outcome);
  return j;
}

inline EntityRecord record_from_json(const Json& j, int line = 0) {
  if (!j.is_object()) throw ParseError(line, "record is not a JSON object");
  if (!j.contains(kEntityIdKey) || !j.at(kEntityIdKey).is_string()) {
    throw ParseError(line, "missing or non-string 'entity_id'");
  }
  if (!j.contains(kAttributesKey) || !j.at(kAttributesKey).is_object()) {
    throw ParseError(line, "missing or non-object 'attributes'");
  }
  EntityRecord record;
  record.entity_id = j.at(kEntityIdKey).get<std::string>();
  record.attributes = j.at(kAttributesKey);
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == kEntityIdKey || key == kAttributesKey) continue;
    if (key == kOutcomeKey) {
      if (!it.value().is_string()) throw ParseError(line, "'outcome' is not a string");
      std::string v = it.value().get<std::string>();
      if (v == kOutcomeSuccess) {
        record.outcome = Outcome::Success;
      } else if (v == kOutcomeFailure) {
        record.outcome = Outcome::Failure;
      } else {
        throw ParseError(line, "unknown outcome '" + v + "'");
      }
      continue;
    }
    throw ParseError(line, "unexpected key '" + key + "'");
  }
  return record;
}

inline EntityRecord record_from_json_line(std::string_view text, int line) {
  Json j = Json::parse(text, nullptr, false);
  if (j.is_discarded()) throw ParseError(line, "malformed JSON");
  return record_from_json(j, line);
}

enum class DatasetRole { Discovery, Heldout };

inline const char* dataset_role_name(DatasetRole role) {
  return role == DatasetRole::Discovery ? "discovery" : "heldout";
}

inline DatasetRole dataset_role_from_name(std::string_view name) {
  if (name == "discovery") return DatasetRole::Discovery;
  if (name == "heldout") return DatasetRole::Heldout;
  throw Error(ErrorCode::InvalidRole, "unknown dataset role '" + std::string(name) + "'");
}

/// Validated labeled population. N1 + N0 always equals records.size().
struct Dataset {
  std::vector<EntityRecord> records;
  DatasetRole role = DatasetRole::Discovery;
  std::size_t n1 = 0;  // successful
  std::size_t n0 = 0;  // unsuccessful

  std::set<std::string> entity_ids() const {
    std::set<std::string> ids;
    for (const auto& r : records) ids.insert(r.entity_id);
    return ids;
  }
};

/// Builds a Dataset from labeled records, computing class counts. Every
/// record must carry an outcome and entity ids must be unique.
inline Dataset validate_dataset(std::vector<EntityRecord> records, DatasetRole role) {
  if (records.empty()) {
    throw Error(ErrorCode::EmptyDataset, "dataset has no records");
  }
  std::unordered_set<std::string> seen;
  seen.reserve(records.size());
  Dataset dataset;
  dataset.role = role;
  for (const auto& record : records) {
    if (!seen.insert(record.entity_id).second) {
      throw Error(ErrorCode::DuplicateEntityId, "duplicate entity_id '" + record.entity_id + "'");
    }
    if (!record.outcome) {
      throw Error(ErrorCode::MissingOutcome,
                  "record '" + record.entity_id + "' has no outcome label");
    }
    if (*record.outcome == Outcome::Success) {
      ++dataset.n1;
    } else {
      ++dataset.n0;
    }
  }
  dataset.records = std::move(records);
  return dataset;
}

/// Copies of the dataset's records with the outcome stripped. Attribute
/// content is untouched.
inline std::vector<EntityRecord> redact_labels(const Dataset& dataset) {
  std::vector<EntityRecord> out;
  out.reserve(dataset.records.size());
  for (const auto& record : dataset.records) {
    out.push_back(EntityRecord{record.entity_id, record.attributes, std::nullopt});
  }
  return out;
}

enum class Condition { Cognitive, Vanilla };

inline const char* condition_name(Condition c) {
  return c == Condition::Cognitive ? "cognitive" : "vanilla";
}

inline Condition condition_from_name(std::string_view name) {
  if (name == "cognitive") return Condition::Cognitive;
  if (name == "vanilla") return Condition::Vanilla;
  throw Error(ErrorCode::ConfigError, "unknown condition '" + std::string(name) + "'");
}

/// Subgoal value recorded for features discovered under the vanilla
/// condition, which has no subgoal taxonomy.
inline constexpr const char* kUnspecifiedSubgoal = "unspecified";

struct AbandonedIdea {
  std::string idea;
  std::string reason;
};

/// A named candidate feature as accumulated on the master list.
struct FeatureSpec {
  std::string feature_id;  // canonical slug, unique within a master list
  std::string feature_name;
  std::string subgoal;
  std::string causal_mechanism;
  std::string definition;
  std::string computation_logic;
  std::vector<AbandonedIdea> abandoned_ideas;
  // Source batch ids, plus ancestor feature ids after merges. Order-preserving
  // concatenation; never deduplicated, so the batch-id multiset survives merges.
  std::vector<std::string> provenance;
  Condition condition = Condition::Cognitive;
};

inline Json feature_to_json(const FeatureSpec& f) {
  Json ideas = Json::array();
  for (const auto& idea : f.abandoned_ideas) {
    ideas.push_back(Json{{"idea", idea.idea}, {"reason", idea.reason}});
  }
  return Json{
      {"feature_id", f.feature_id},
      {"feature_name", f.feature_name},
      {"subgoal", f.subgoal},
      {"causal_mechanism", f.causal_mechanism},
      {"definition", f.definition},
      {"computation_logic", f.computation_logic},
      {"abandoned_ideas", ideas},
      {"provenance", f.provenance},
      {"condition", condition_name(f.condition)},
  };
}

inline FeatureSpec feature_from_json(const Json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseFailure, "feature is not an object");
  FeatureSpec f;
  try {
    f.feature_id = j.at("feature_id").get<std::string>();
    f.feature_name = j.at("feature_name").get<std::string>();
    f.subgoal = j.at("subgoal").get<std::string>();
    f.causal_mechanism = j.at("causal_mechanism").get<std::string>();
    f.definition = j.at("definition").get<std::string>();
    f.computation_logic = j.at("computation_logic").get<std::string>();
    for (const auto& idea : j.at("abandoned_ideas")) {
      f.abandoned_ideas.push_back(AbandonedIdea{idea.at("idea").get<std::string>(),
                                                idea.at("reason").get<std::string>()});
    }
    f.provenance = j.at("provenance").get<std::vector<std::string>>();
    f.condition = condition_from_name(j.at("condition").get<std::string>());
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::ParseFailure, std::string("bad feature record: ") + e.what());
  }
  if (f.provenance.empty()) {
    throw Error(ErrorCode::ParseFailure, "feature '" + f.feature_id + "' has empty provenance");
  }
  return f;
}

/// Which entities exhibit which features, against one dataset. Keys are
/// sorted, so iteration and serialization are deterministic.
struct AssignmentMatrix {
  std::map<std::string, std::set<std::string>> assignments;
  std::string population_id;  // label of the dataset scored against

  Json to_json() const {
    Json a = Json::object();
    for (const auto& [fid, ids] : assignments) {
      a[fid] = std::vector<std::string>(ids.begin(), ids.end());
    }
    return Json{{"population_id", population_id}, {"assignments", a}};
  }

  static AssignmentMatrix from_json(const Json& j) {
    AssignmentMatrix m;
    try {
      m.population_id = j.at("population_id").get<std::string>();
      for (const auto& [fid, ids] : j.at("assignments").items()) {
        auto& set = m.assignments[fid];
        for (const auto& id : ids) set.insert(id.get<std::string>());
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("bad assignment matrix: ") + e.what());
    }
    return m;
  }
};

/// Per-feature counting statistics against one labeled population.
/// delta_sr is absent when Eq.-style conditioning is degenerate (zero or
/// full support).
struct FeatureStats {
  std::string feature_id;
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  std::optional<double> delta_sr;
  double precision = 0.0;
  double lift = 0.0;
  double support = 0.0;
  double base_rate = 0.0;
};

}  // namespace cofee
