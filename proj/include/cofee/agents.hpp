#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cofee/backend.hpp"
#include "cofee/core.hpp"
#include "cofee/errors.hpp"
#include "cofee/util.hpp"

namespace cofee::agents {

using backend::AgentTranscript;
using backend::CompletionRequest;
using backend::Provider;

inline constexpr std::size_t kDefaultDiscoveryBatchSize = 50;
inline constexpr std::size_t kDefaultScoringFeatureBatch = 100;
inline constexpr std::size_t kDefaultScoringRecordBatch = 1000;
inline constexpr std::size_t kDefaultConsolidationBatchSize = 100;
inline constexpr std::size_t kMaxMergeGroupSize = 5;

/// The four permitted subgoal categories under the cognitive condition.
inline const std::array<std::string_view, 4>& subgoal_categories() {
  static const std::array<std::string_view, 4> kCategories = {
      "founder capability formation",
      "team coordination and complementarity",
      "market structure and constraints",
      "early execution dynamics",
  };
  return kCategories;
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

namespace prompts {

inline constexpr const char* kSharedTaskHeader =
    R"(You are Agent 1: a stateless Feature Discovery agent.

You are given a batch of 50 founder records.

You do NOT know which founders are successful or unsuccessful.
You have NO memory of previous batches.

Your task is to propose candidate FEATURES that could plausibly distinguish
successful from unsuccessful founders.
)";

inline constexpr const char* kCognitiveBehaviors =
    R"(
You are performing Cognitive Feature Reasoning.
You must explicitly apply the following cognitive behaviors.
You must produce structured outputs and make explicit decisions.

--------------------------------
1. BACKWARD CHAINING
--------------------------------
Start from system-level success or failure.

For each proposed mechanism:
- State the causal hypothesis explicitly.
- Explain why this mechanism would operate *before* success.
- Map the mechanism to at least one measurable or inferable quantity
  available in the dataset.

You may reason about hidden variables, but the final feature MUST be:
- observable pre-success
- expressible in deterministic logic

If a mechanism cannot be mapped to an observable feature, abandon it.

--------------------------------
2. SUBGOAL SETTING
--------------------------------
Organize exploration into NO MORE THAN 4 subgoals chosen from:
- founder capability formation
- team coordination and complementarity
- market structure and constraints
- early execution dynamics

For each subgoal:
- List candidate mechanisms.
- Maintain the hierarchy:
    system behavior -> mechanism -> feature.

If a subgoal:
- collapses into a proxy
- fails observability
- has ambiguous causal direction

then explicitly ABANDON or REVISE the subgoal and explain why.

--------------------------------
3. VERIFICATION
--------------------------------
For each proposed feature, verify:
- it is observable before the success outcome
- it encodes a plausible causal mechanism
- it is not a prestige-based, descriptive, or post-outcome proxy

For each feature, list:
- potential bias sources
- uncertainty or ambiguity

If verification fails, reject the feature.

--------------------------------
4. BACKTRACKING
--------------------------------
Explicitly record every abandoned reasoning path.

For each abandoned path, record:
- why it initially seemed promising
- which constraint caused rejection
  (proxy risk, leakage, observability failure, causal ambiguity)

Use these abandoned paths to bias future exploration away
from similar dead ends.

--------------------------------
)";

inline constexpr const char* kVanillaBehaviors =
    R"(
Features must be observable pre-success

You must produce structured outputs and make explicit decisions.
)";

inline constexpr const char* kDiscoveryOutputFormat =
    R"(
OUTPUT FORMAT
Respond with a single JSON object and nothing else, echoing the batch_id
you were given:
{
  "batch_id": "string",
  "features": [
    {
      "feature_name": "string",
      "subgoal": "string",
      "causal_mechanism": "string",
      "definition": "string",
      "computation_logic": "string",
      "abandoned_ideas": [
        {
          "idea": "string",
          "reason": "string"
        }
      ]
    }
  ]
}
)";

inline constexpr const char* kConsolidationSystemPrompt =
    R"(You are Agent 2: a Feature Consolidation agent.

You are given a list of candidate features, each with a feature_id, a
feature_name, and a definition.

Identify features that describe the same underlying mechanism and merge
them. Be conservative: merge only when the features clearly measure the
same thing, keep distinct mechanisms separate, and never put more than 5
features in one merge group.

OUTPUT FORMAT
Respond with a single JSON array and nothing else, one element per merge
decision:
[
  {
    "merged_name": "string",
    "member_feature_ids": ["string", "string"],
    "justification": "string"
  }
]
Every decision needs at least 2 members, and a feature may appear in at
most one decision. Respond with [] when nothing should be merged.
)";

inline constexpr const char* kScoringSystemPrompt =
    R"(You are Agent 3: a Feature Scoring agent.

You are given a list of features (feature_id, feature_name, definition)
and a batch of founder records.

Compare each feature's name and definition against every founder record.
When a feature matches a founder, tag that founder with the feature.

OUTPUT FORMAT
Respond with a single JSON object and nothing else:
{
  "assignments": {
    "<feature_id>": ["<entity_id>", "..."]
  }
}
Include every feature_id you were given, with an empty list when no
founder matches. Tag only entity_ids that appear in the given records.
)";

}  // namespace prompts

/// Agent 1 condition: which behavioral constraints the discovery prompt
/// carries. Everything downstream of Agent 1 is condition-independent.
struct PromptCondition {
  Condition kind = Condition::Cognitive;
  std::string template_text;
};

inline std::string default_discovery_template(Condition kind) {
  std::string text = prompts::kSharedTaskHeader;
  text += kind == Condition::Cognitive ? prompts::kCognitiveBehaviors : prompts::kVanillaBehaviors;
  text += prompts::kDiscoveryOutputFormat;
  return text;
}

inline PromptCondition default_condition(Condition kind) {
  return PromptCondition{kind, default_discovery_template(kind)};
}

/// Enforces the template invariants: the cognitive template must carry all
/// four behavior sections, the vanilla one none of them, and both must state
/// the task and the pre-success observability constraint.
inline void validate_condition(const PromptCondition& condition) {
  static const std::array<std::string_view, 4> kSections = {
      "BACKWARD CHAINING", "SUBGOAL SETTING", "VERIFICATION", "BACKTRACKING"};
  const std::string& text = condition.template_text;
  auto has = [&text](std::string_view needle) { return text.find(needle) != std::string::npos; };
  if (!has("propose candidate FEATURES")) {
    throw Error(ErrorCode::ConfigError, "discovery template lacks the task statement");
  }
  if (!has("observable pre-success")) {
    throw Error(ErrorCode::ConfigError, "discovery template lacks the observability constraint");
  }
  for (std::string_view section : kSections) {
    const bool present = has(section);
    if (condition.kind == Condition::Cognitive && !present) {
      throw Error(ErrorCode::ConfigError,
                  "cognitive template missing section '" + std::string(section) + "'");
    }
    if (condition.kind == Condition::Vanilla && present) {
      throw Error(ErrorCode::ConfigError,
                  "vanilla template must not contain section '" + std::string(section) + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Rejection causes (backtracking bookkeeping)
// ---------------------------------------------------------------------------

enum class RejectionCause { ProxyRisk, Leakage, ObservabilityFailure, CausalAmbiguity, Other };

inline const char* rejection_cause_name(RejectionCause cause) {
  switch (cause) {
    case RejectionCause::ProxyRisk: return "proxy_risk";
    case RejectionCause::Leakage: return "leakage";
    case RejectionCause::ObservabilityFailure: return "observability_failure";
    case RejectionCause::CausalAmbiguity: return "causal_ambiguity";
    case RejectionCause::Other: return "other";
  }
  return "other";
}

/// Keyword classification of a free-text rejection reason; anything that
/// matches none of the named causes maps to Other.
inline RejectionCause classify_rejection_cause(std::string_view reason) {
  std::string lower(reason);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower.find("proxy") != std::string::npos) return RejectionCause::ProxyRisk;
  if (lower.find("leak") != std::string::npos) return RejectionCause::Leakage;
  if (lower.find("observab") != std::string::npos) return RejectionCause::ObservabilityFailure;
  if (lower.find("causal") != std::string::npos || lower.find("ambigu") != std::string::npos) {
    return RejectionCause::CausalAmbiguity;
  }
  return RejectionCause::Other;
}

// ---------------------------------------------------------------------------
// Batch construction
// ---------------------------------------------------------------------------

/// One agent-facing discovery batch: payload is the exact serialized bytes
/// sent to the provider.
struct SerializedBatch {
  std::string batch_id;
  std::string payload;
  std::vector<std::string> entity_ids;
};

/// Splits records into fixed-size batches. Records keep their order; every
/// record lands in exactly one batch. Serialization never includes outcome
/// labels regardless of what the caller passed in.
inline std::vector<SerializedBatch> build_discovery_batches(
    const std::vector<EntityRecord>& records, std::size_t batch_size = kDefaultDiscoveryBatchSize) {
  if (batch_size == 0) throw Error(ErrorCode::ConfigError, "batch_size must be positive");
  std::vector<SerializedBatch> batches;
  batches.reserve((records.size() + batch_size - 1) / batch_size);
  for (std::size_t begin = 0; begin < records.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, records.size());
    SerializedBatch batch;
    batch.batch_id = "batch_" + zero_padded(batches.size() + 1, 4);
    Json payload_records = Json::array();
    for (std::size_t i = begin; i < end; ++i) {
      payload_records.push_back(record_to_redacted_json(records[i]));
      batch.entity_ids.push_back(records[i].entity_id);
    }
    batch.payload = Json{{"batch_id", batch.batch_id}, {"records", payload_records}}.dump();
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Response validation
// ---------------------------------------------------------------------------

namespace detail {

enum class ViolationKind { Schema, Subgoal, Entity, Member, Overlap };

struct Violation {
  ViolationKind kind;
  std::string message;
};

inline ErrorCode violation_code(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::Schema: return ErrorCode::SchemaViolation;
    case ViolationKind::Subgoal: return ErrorCode::SubgoalViolation;
    case ViolationKind::Entity: return ErrorCode::UnknownEntityId;
    case ViolationKind::Member: return ErrorCode::UnknownMemberId;
    case ViolationKind::Overlap: return ErrorCode::OverlappingMergeGroups;
  }
  return ErrorCode::SchemaViolation;
}

inline std::optional<Violation> schema_error(std::string message) {
  return Violation{ViolationKind::Schema, std::move(message)};
}

inline bool keys_exactly(const Json& j, const std::vector<std::string_view>& keys) {
  if (!j.is_object() || j.size() != keys.size()) return false;
  for (std::string_view key : keys) {
    if (!j.contains(key)) return false;
  }
  return true;
}

/// Key-for-key check of an Agent 1 response against the discovery schema.
inline std::optional<Violation> check_discovery_schema(const Json& response) {
  if (!response.is_object()) return schema_error("response is not a JSON object");
  if (!keys_exactly(response, {"batch_id", "features"})) {
    return schema_error("response must contain exactly the keys 'batch_id' and 'features'");
  }
  if (!response.at("batch_id").is_string()) return schema_error("'batch_id' must be a string");
  if (!response.at("features").is_array()) return schema_error("'features' must be an array");
  std::size_t index = 0;
  for (const auto& feature : response.at("features")) {
    const std::string where = "features[" + std::to_string(index) + "]";
    if (!keys_exactly(feature, {"feature_name", "subgoal", "causal_mechanism", "definition",
                                "computation_logic", "abandoned_ideas"})) {
      return schema_error(where + " must contain exactly the schema keys");
    }
    for (const char* key :
         {"feature_name", "subgoal", "causal_mechanism", "definition", "computation_logic"}) {
      if (!feature.at(key).is_string()) {
        return schema_error(where + "." + key + " must be a string");
      }
    }
    if (!feature.at("abandoned_ideas").is_array()) {
      return schema_error(where + ".abandoned_ideas must be an array");
    }
    std::size_t idea_index = 0;
    for (const auto& idea : feature.at("abandoned_ideas")) {
      if (!keys_exactly(idea, {"idea", "reason"}) || !idea.at("idea").is_string() ||
          !idea.at("reason").is_string()) {
        return schema_error(where + ".abandoned_ideas[" + std::to_string(idea_index) +
                            "] must be an object with string 'idea' and 'reason'");
      }
      ++idea_index;
    }
    ++index;
  }
  return std::nullopt;
}

/// Cognitive-condition constraint: at most 4 distinct subgoal values, each
/// drawn from the permitted categories.
inline std::optional<Violation> check_subgoals(const Json& response) {
  std::set<std::string> distinct;
  for (const auto& feature : response.at("features")) {
    const std::string subgoal = feature.at("subgoal").get<std::string>();
    distinct.insert(subgoal);
    const auto& categories = subgoal_categories();
    if (std::find(categories.begin(), categories.end(), subgoal) == categories.end()) {
      return Violation{ViolationKind::Subgoal, "subgoal '" + subgoal + "' is not a permitted category"};
    }
  }
  if (distinct.size() > 4) {
    return Violation{ViolationKind::Subgoal,
                     "response uses " + std::to_string(distinct.size()) + " distinct subgoals (max 4)"};
  }
  return std::nullopt;
}

inline std::optional<Violation> check_discovery_response(const std::string& raw,
                                                         Condition condition, Json& parsed) {
  parsed = Json::parse(raw, nullptr, false);
  if (parsed.is_discarded()) return schema_error("response is not valid JSON");
  if (auto v = check_discovery_schema(parsed)) return v;
  if (condition == Condition::Cognitive) {
    if (auto v = check_subgoals(parsed)) return v;
  }
  return std::nullopt;
}

inline std::optional<Violation> check_merge_response(
    const std::string& raw, const std::unordered_set<std::string>& known_ids, Json& parsed) {
  parsed = Json::parse(raw, nullptr, false);
  if (parsed.is_discarded()) return schema_error("response is not valid JSON");
  if (!parsed.is_array()) return schema_error("response must be a JSON array of merge decisions");
  std::unordered_set<std::string> used;
  std::size_t index = 0;
  for (const auto& decision : parsed) {
    const std::string where = "decision[" + std::to_string(index) + "]";
    if (!keys_exactly(decision, {"merged_name", "member_feature_ids", "justification"})) {
      return schema_error(where + " must contain exactly merged_name, member_feature_ids, justification");
    }
    if (!decision.at("merged_name").is_string() || !decision.at("justification").is_string()) {
      return schema_error(where + " merged_name and justification must be strings");
    }
    const Json& members = decision.at("member_feature_ids");
    if (!members.is_array() || members.size() < 2) {
      return schema_error(where + " needs an array of at least 2 member_feature_ids");
    }
    if (members.size() > kMaxMergeGroupSize) {
      return schema_error(where + " exceeds the conservative limit of " +
                          std::to_string(kMaxMergeGroupSize) + " members");
    }
    for (const auto& member : members) {
      if (!member.is_string()) return schema_error(where + " member ids must be strings");
      const std::string id = member.get<std::string>();
      if (known_ids.count(id) == 0) {
        return Violation{ViolationKind::Member, where + " references unknown feature '" + id + "'"};
      }
      if (!used.insert(id).second) {
        return Violation{ViolationKind::Overlap,
                         "feature '" + id + "' appears in more than one merge decision"};
      }
    }
    ++index;
  }
  return std::nullopt;
}

inline std::optional<Violation> check_assignment_response(
    const std::string& raw, const std::unordered_set<std::string>& feature_ids,
    const std::unordered_set<std::string>& entity_ids, Json& parsed) {
  parsed = Json::parse(raw, nullptr, false);
  if (parsed.is_discarded()) return schema_error("response is not valid JSON");
  if (!keys_exactly(parsed, {"assignments"})) {
    return schema_error("response must contain exactly the key 'assignments'");
  }
  const Json& assignments = parsed.at("assignments");
  if (!assignments.is_object()) return schema_error("'assignments' must be an object");
  for (const auto& [fid, ids] : assignments.items()) {
    if (feature_ids.count(fid) == 0) {
      return schema_error("assignments references unknown feature '" + fid + "'");
    }
    if (!ids.is_array()) return schema_error("assignments." + fid + " must be an array");
    for (const auto& id : ids) {
      if (!id.is_string()) return schema_error("assignments." + fid + " entries must be strings");
      const std::string entity = id.get<std::string>();
      if (entity_ids.count(entity) == 0) {
        return Violation{ViolationKind::Entity,
                         "feature '" + fid + "' tags entity '" + entity + "' not in the batch"};
      }
    }
  }
  return std::nullopt;
}

/// Re-prompt payload: the original payload plus the validation error. The
/// note is carried as a JSON field so the payload stays parseable by every
/// provider; plain-text appending is the fallback for non-object payloads.
inline std::string corrective_payload(const std::string& original, const std::string& error) {
  const std::string note = "Your previous response was rejected: " + error +
                           ". Respond again with output that conforms exactly to the required format.";
  Json payload = Json::parse(original, nullptr, false);
  if (payload.is_object()) {
    payload["validation_error"] = note;
    return payload.dump();
  }
  return original + "\n\nVALIDATION ERROR\n" + note;
}

/// Issue the request; on validation failure, re-prompt once with the error
/// appended, then fail hard with the violation's error code. Transcripts for
/// every attempt (marked valid/invalid) are appended to `transcripts`.
template <typename Validate>
Json complete_validated(Provider& provider, CompletionRequest request, Validate&& validate,
                        std::vector<AgentTranscript>& transcripts) {
  AgentTranscript first = provider.complete(request);
  Json parsed;
  auto violation = validate(first.raw_response, parsed);
  if (!violation) {
    transcripts.push_back(std::move(first));
    return parsed;
  }
  first.validation = backend::ValidationStatus::invalid(violation->message);
  transcripts.push_back(std::move(first));

  CompletionRequest retry = request;
  retry.request_id = request.request_id + "_retry";
  retry.user_payload = corrective_payload(request.user_payload, violation->message);
  AgentTranscript second = provider.complete(retry);
  auto second_violation = validate(second.raw_response, parsed);
  if (!second_violation) {
    transcripts.push_back(std::move(second));
    return parsed;
  }
  second.validation = backend::ValidationStatus::invalid(second_violation->message);
  transcripts.push_back(std::move(second));
  throw Error(violation_code(second_violation->kind), second_violation->message);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Agent 1: discovery
// ---------------------------------------------------------------------------

struct DiscoveryResult {
  std::vector<FeatureSpec> features;
  std::vector<AgentTranscript> transcripts;
};

/// Runs Agent 1 on one batch and converts the validated response into
/// FeatureSpecs with provenance = [batch_id]. Output depends only on this
/// batch, the condition, and the provider's answer to this single call.
inline DiscoveryResult discover_features(const SerializedBatch& batch,
                                         const PromptCondition& condition, Provider& provider) {
  DiscoveryResult result;
  CompletionRequest request;
  request.request_id = "disc_" + batch.batch_id;
  request.schema_id = backend::kDiscoverySchema;
  request.system_prompt = condition.template_text;
  request.user_payload = batch.payload;

  Json response = detail::complete_validated(
      provider, request,
      [&](const std::string& raw, Json& parsed) {
        return detail::check_discovery_response(raw, condition.kind, parsed);
      },
      result.transcripts);

  SlugAllocator slugs;
  for (const auto& item : response.at("features")) {
    FeatureSpec feature;
    feature.feature_name = item.at("feature_name").get<std::string>();
    feature.feature_id = slugs.allocate(feature.feature_name);
    feature.subgoal = condition.kind == Condition::Vanilla ? kUnspecifiedSubgoal
                                                           : item.at("subgoal").get<std::string>();
    feature.causal_mechanism = item.at("causal_mechanism").get<std::string>();
    feature.definition = item.at("definition").get<std::string>();
    feature.computation_logic = item.at("computation_logic").get<std::string>();
    for (const auto& idea : item.at("abandoned_ideas")) {
      feature.abandoned_ideas.push_back(
          AbandonedIdea{idea.at("idea").get<std::string>(), idea.at("reason").get<std::string>()});
    }
    feature.provenance = {batch.batch_id};
    feature.condition = condition.kind;
    result.features.push_back(std::move(feature));
  }
  return result;
}

/// Folds a batch's features into the master list. Exact-slug duplicates
/// coalesce by appending provenance; semantically similar but differently
/// named features are left for Agent 2. First-seen order is preserved.
inline std::vector<FeatureSpec> accumulate_master_list(std::vector<FeatureSpec> existing,
                                                       const std::vector<FeatureSpec>& incoming) {
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(existing.size());
  for (std::size_t i = 0; i < existing.size(); ++i) index.emplace(existing[i].feature_id, i);
  for (const auto& feature : incoming) {
    auto it = index.find(feature.feature_id);
    if (it == index.end()) {
      index.emplace(feature.feature_id, existing.size());
      existing.push_back(feature);
    } else {
      auto& provenance = existing[it->second].provenance;
      provenance.insert(provenance.end(), feature.provenance.begin(), feature.provenance.end());
    }
  }
  return existing;
}

// ---------------------------------------------------------------------------
// Agent 2: consolidation
// ---------------------------------------------------------------------------

struct MergeDecision {
  std::string merged_name;
  std::vector<std::string> member_feature_ids;
  std::string justification;

  Json to_json() const {
    return Json{{"merged_name", merged_name},
                {"member_feature_ids", member_feature_ids},
                {"justification", justification}};
  }
};

struct ConsolidationResult {
  std::vector<FeatureSpec> features;
  std::vector<MergeDecision> decisions;
  std::vector<AgentTranscript> transcripts;
};

namespace detail {

/// Lexical pre-cluster key: the feature name's sorted lowercase word stems.
/// Near-duplicate names ("max_seniority_level" / "seniority_level_max") get
/// identical keys and therefore end up in the same consolidation call.
inline std::string stem_fingerprint(const std::string& name) {
  std::set<std::string> stems;
  std::string current;
  auto flush = [&]() {
    if (!current.empty()) stems.insert(current);
    current.clear();
  };
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  std::string key;
  for (const auto& stem : stems) {
    key += stem;
    key += ' ';
  }
  return key;
}

inline Json consolidation_payload(const std::vector<const FeatureSpec*>& chunk) {
  Json features = Json::array();
  for (const FeatureSpec* f : chunk) {
    features.push_back(Json{{"feature_id", f->feature_id},
                            {"feature_name", f->feature_name},
                            {"definition", f->definition}});
  }
  return Json{{"features", features}};
}

inline FeatureSpec merge_members(const MergeDecision& decision,
                                 const std::vector<const FeatureSpec*>& members,
                                 SlugAllocator& slugs) {
  FeatureSpec merged;
  merged.feature_name = decision.merged_name;
  merged.feature_id = slugs.allocate(decision.merged_name);
  merged.subgoal = members.front()->subgoal;
  merged.causal_mechanism = members.front()->causal_mechanism;
  merged.condition = members.front()->condition;
  std::string definition;
  std::string logic;
  for (const FeatureSpec* member : members) {
    if (!definition.empty()) definition += "\n";
    definition += member->definition;
    if (!logic.empty()) logic += "\n";
    logic += member->computation_logic;
    merged.abandoned_ideas.insert(merged.abandoned_ideas.end(), member->abandoned_ideas.begin(),
                                  member->abandoned_ideas.end());
    merged.provenance.insert(merged.provenance.end(), member->provenance.begin(),
                             member->provenance.end());
  }
  // Ancestor ids follow the batch ids so merge lineage stays reconstructible.
  for (const FeatureSpec* member : members) merged.provenance.push_back(member->feature_id);
  merged.definition = std::move(definition);
  merged.computation_logic = std::move(logic);
  return merged;
}

}  // namespace detail

/// One conservative consolidation pass. Merge decisions replace their members
/// in place (at the first member's position); everything else passes through
/// untouched. Chains that would need transitivity across decisions are left
/// for an explicit second pass.
inline ConsolidationResult consolidate(const std::vector<FeatureSpec>& master, Provider& provider,
                                       std::size_t batch_size = kDefaultConsolidationBatchSize) {
  if (master.empty()) {
    throw Error(ErrorCode::EmptyFeatureSet, "consolidation requires a non-empty master list");
  }
  if (batch_size == 0) throw Error(ErrorCode::ConfigError, "batch_size must be positive");

  std::unordered_set<std::string> known_ids;
  std::unordered_map<std::string, const FeatureSpec*> by_id;
  for (const auto& f : master) {
    known_ids.insert(f.feature_id);
    by_id.emplace(f.feature_id, &f);
  }

  // Chunk the master list; when it exceeds one call, sort by the lexical
  // fingerprint first so near-duplicates co-occur.
  std::vector<const FeatureSpec*> ordered;
  ordered.reserve(master.size());
  for (const auto& f : master) ordered.push_back(&f);
  if (master.size() > batch_size) {
    std::stable_sort(ordered.begin(), ordered.end(), [](const FeatureSpec* a, const FeatureSpec* b) {
      return detail::stem_fingerprint(a->feature_name) < detail::stem_fingerprint(b->feature_name);
    });
  }

  ConsolidationResult result;
  std::unordered_set<std::string> merged_ids;  // across all chunks
  for (std::size_t begin = 0; begin < ordered.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, ordered.size());
    std::vector<const FeatureSpec*> chunk(ordered.begin() + begin, ordered.begin() + end);

    CompletionRequest request;
    request.request_id = "cons_" + zero_padded(begin / batch_size + 1, 4);
    request.schema_id = backend::kMergeSchema;
    request.system_prompt = prompts::kConsolidationSystemPrompt;
    request.user_payload = detail::consolidation_payload(chunk).dump();

    Json response = detail::complete_validated(
        provider, request,
        [&](const std::string& raw, Json& parsed) {
          return detail::check_merge_response(raw, known_ids, parsed);
        },
        result.transcripts);

    for (const auto& decision_json : response) {
      MergeDecision decision;
      decision.merged_name = decision_json.at("merged_name").get<std::string>();
      decision.justification = decision_json.at("justification").get<std::string>();
      for (const auto& member : decision_json.at("member_feature_ids")) {
        const std::string member_id = member.get<std::string>();
        if (!merged_ids.insert(member_id).second) {
          throw Error(ErrorCode::OverlappingMergeGroups,
                      "feature '" + member_id + "' claimed by merge decisions in two batches");
        }
        decision.member_feature_ids.push_back(member_id);
      }
      result.decisions.push_back(std::move(decision));
    }
  }

  // Apply decisions in master order: the merged feature takes the first
  // member's slot, later members disappear.
  std::unordered_map<std::string, std::size_t> decision_of;
  for (std::size_t d = 0; d < result.decisions.size(); ++d) {
    for (const auto& member : result.decisions[d].member_feature_ids) decision_of.emplace(member, d);
  }
  SlugAllocator slugs;
  for (const auto& f : master) {
    if (decision_of.count(f.feature_id) == 0) slugs.reserve(f.feature_id);
  }
  std::unordered_set<std::size_t> applied;
  for (const auto& f : master) {
    auto it = decision_of.find(f.feature_id);
    if (it == decision_of.end()) {
      result.features.push_back(f);
      continue;
    }
    if (!applied.insert(it->second).second) continue;  // not the first member
    const MergeDecision& decision = result.decisions[it->second];
    std::vector<const FeatureSpec*> members;
    members.reserve(decision.member_feature_ids.size());
    for (const auto& member_id : decision.member_feature_ids) {
      members.push_back(by_id.at(member_id));
    }
    result.features.push_back(detail::merge_members(decision, members, slugs));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Agent 3: scoring
// ---------------------------------------------------------------------------

struct ScoringResult {
  AssignmentMatrix matrix;
  std::vector<AgentTranscript> transcripts;
};

namespace detail {

inline Json scoring_features_json(const std::vector<FeatureSpec>& features, std::size_t begin,
                                  std::size_t end) {
  Json out = Json::array();
  for (std::size_t i = begin; i < end; ++i) {
    out.push_back(Json{{"feature_id", features[i].feature_id},
                       {"feature_name", features[i].feature_name},
                       {"definition", features[i].definition}});
  }
  return out;
}

}  // namespace detail

/// Runs Agent 3 over the frozen feature list against a dataset, batching
/// features and records. The matrix covers every feature; entities the agent
/// never tagged simply stay absent from the sets. `request_tag` namespaces
/// the request ids so several scoring passes in one run stay distinct.
inline ScoringResult score_features(const std::vector<FeatureSpec>& features,
                                    const Dataset& dataset, Provider& provider,
                                    std::size_t feature_batch = kDefaultScoringFeatureBatch,
                                    std::size_t record_batch = kDefaultScoringRecordBatch,
                                    const std::string& request_tag = "score") {
  if (feature_batch == 0 || record_batch == 0) {
    throw Error(ErrorCode::ConfigError, "batch sizes must be positive");
  }
  ScoringResult result;
  result.matrix.population_id = dataset_role_name(dataset.role);
  if (features.empty()) return result;
  for (const auto& f : features) result.matrix.assignments[f.feature_id];

  const std::vector<EntityRecord> redacted = redact_labels(dataset);
  std::unordered_set<std::string> feature_ids;
  for (const auto& f : features) feature_ids.insert(f.feature_id);

  // TODO: scoring chunks could run through parallel_map like discovery batches.
  std::size_t feature_chunks = (features.size() + feature_batch - 1) / feature_batch;
  std::size_t record_chunks = (redacted.size() + record_batch - 1) / record_batch;
  for (std::size_t fc = 0; fc < feature_chunks; ++fc) {
    const std::size_t f_begin = fc * feature_batch;
    const std::size_t f_end = std::min(f_begin + feature_batch, features.size());
    Json features_json = detail::scoring_features_json(features, f_begin, f_end);
    for (std::size_t rc = 0; rc < record_chunks; ++rc) {
      const std::size_t r_begin = rc * record_batch;
      const std::size_t r_end = std::min(r_begin + record_batch, redacted.size());
      Json records_json = Json::array();
      std::unordered_set<std::string> entity_ids;
      for (std::size_t i = r_begin; i < r_end; ++i) {
        records_json.push_back(record_to_redacted_json(redacted[i]));
        entity_ids.insert(redacted[i].entity_id);
      }

      CompletionRequest request;
      request.request_id = request_tag + "_f" + zero_padded(fc + 1, 3) + "_r" + zero_padded(rc + 1, 3);
      request.schema_id = backend::kAssignmentSchema;
      request.system_prompt = prompts::kScoringSystemPrompt;
      request.user_payload = Json{{"features", features_json}, {"records", records_json}}.dump();

      Json response = detail::complete_validated(
          provider, request,
          [&](const std::string& raw, Json& parsed) {
            return detail::check_assignment_response(raw, feature_ids, entity_ids, parsed);
          },
          result.transcripts);

      for (const auto& [fid, ids] : response.at("assignments").items()) {
        auto& target = result.matrix.assignments.at(fid);
        for (const auto& entity : ids) target.insert(entity.get<std::string>());
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Master list persistence
// ---------------------------------------------------------------------------

struct MasterList {
  Condition condition = Condition::Cognitive;
  std::vector<FeatureSpec> features;

  Json to_json() const {
    Json features_json = Json::array();
    for (const auto& f : features) features_json.push_back(feature_to_json(f));
    return Json{{"condition", condition_name(condition)}, {"features", features_json}};
  }

  static MasterList from_json(const Json& j) {
    MasterList list;
    try {
      list.condition = condition_from_name(j.at("condition").get<std::string>());
      for (const auto& f : j.at("features")) list.features.push_back(feature_from_json(f));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("bad master list: ") + e.what());
    }
    return list;
  }
};

}  // namespace cofee::agents
