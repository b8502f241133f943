#pragma once

#include <cstddef>
#include <deque>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cofee/errors.hpp"
#include "cofee/util.hpp"

namespace cofee::backend {

// Response schema identifiers, one per agent stage.
inline constexpr const char* kDiscoverySchema = "discovery_batch_v1";
inline constexpr const char* kMergeSchema = "merge_decisions_v1";
inline constexpr const char* kAssignmentSchema = "feature_assignments_v1";

enum class Stage { Discovery, Consolidation, Scoring };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Discovery: return "discovery";
    case Stage::Consolidation: return "consolidation";
    case Stage::Scoring: return "scoring";
  }
  return "unknown";
}

inline Stage stage_for_schema(const std::string& schema_id) {
  if (schema_id == kDiscoverySchema) return Stage::Discovery;
  if (schema_id == kMergeSchema) return Stage::Consolidation;
  if (schema_id == kAssignmentSchema) return Stage::Scoring;
  throw Error(ErrorCode::UnknownSchema, "no stage for schema '" + schema_id + "'");
}

/// Per-million-token prices in dollars; external configuration, never baked in.
struct PriceTable {
  double input_per_mtok = 0.0;
  double output_per_mtok = 0.0;

  double cost(std::size_t input_tokens, std::size_t output_tokens) const {
    return static_cast<double>(input_tokens) * input_per_mtok / 1e6 +
           static_cast<double>(output_tokens) * output_per_mtok / 1e6;
  }

  Json to_json() const {
    return Json{{"input_per_mtok", input_per_mtok}, {"output_per_mtok", output_per_mtok}};
  }

  static PriceTable from_json(const Json& j) {
    PriceTable t;
    try {
      t.input_per_mtok = j.at("input_per_mtok").get<double>();
      t.output_per_mtok = j.at("output_per_mtok").get<double>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("bad price table: ") + e.what());
    }
    return t;
  }
};

struct CompletionRequest {
  std::string request_id;  // unique within one pipeline run
  std::string schema_id;   // expected response schema
  std::string system_prompt;
  std::string user_payload;
  double determinism = 0.0;  // temperature-like hint; 0 = fully deterministic
};

/// Cassette lookup key: stable across request_id regeneration.
inline std::string cassette_key(const CompletionRequest& req) {
  std::string material;
  material.reserve(req.system_prompt.size() + req.user_payload.size() + req.schema_id.size() + 2);
  material += req.system_prompt;
  material += '\x1e';
  material += req.user_payload;
  material += '\x1e';
  material += req.schema_id;
  return sha256_hex(material);
}

struct ValidationStatus {
  bool valid = true;
  std::string reason;

  static ValidationStatus ok() { return {}; }
  static ValidationStatus invalid(std::string why) { return ValidationStatus{false, std::move(why)}; }
};

/// One request/response exchange: the unit of record/replay and of cost
/// accounting.
struct AgentTranscript {
  CompletionRequest request;
  std::string raw_response;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double cost = 0.0;
  ValidationStatus validation;
  std::string provider;  // "live" | "replay" | "mock"

  Json to_json() const {
    Json v = Json{{"status", validation.valid ? "valid" : "invalid"}};
    if (!validation.valid) v["reason"] = validation.reason;
    return Json{
        {"key", cassette_key(request)},
        {"request",
         Json{{"request_id", request.request_id},
              {"schema_id", request.schema_id},
              {"system_prompt", request.system_prompt},
              {"user_payload", request.user_payload},
              {"determinism", request.determinism}}},
        {"raw_response", raw_response},
        {"input_tokens", input_tokens},
        {"output_tokens", output_tokens},
        {"cost", cost},
        {"validation", v},
        {"provider", provider},
    };
  }

  static AgentTranscript from_json(const Json& j) {
    AgentTranscript t;
    try {
      const Json& r = j.at("request");
      t.request.request_id = r.at("request_id").get<std::string>();
      t.request.schema_id = r.at("schema_id").get<std::string>();
      t.request.system_prompt = r.at("system_prompt").get<std::string>();
      t.request.user_payload = r.at("user_payload").get<std::string>();
      t.request.determinism = r.at("determinism").get<double>();
      t.raw_response = j.at("raw_response").get<std::string>();
      t.input_tokens = j.at("input_tokens").get<std::size_t>();
      t.output_tokens = j.at("output_tokens").get<std::size_t>();
      t.cost = j.at("cost").get<double>();
      const Json& v = j.at("validation");
      t.validation.valid = v.at("status").get<std::string>() == "valid";
      if (!t.validation.valid) t.validation.reason = v.value("reason", "");
      t.provider = j.at("provider").get<std::string>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("bad transcript: ") + e.what());
    }
    return t;
  }
};

inline void save_cassette(const std::filesystem::path& path,
                          const std::vector<AgentTranscript>& transcripts) {
  Json arr = Json::array();
  for (const auto& t : transcripts) arr.push_back(t.to_json());
  write_json_file(path, arr);
}

inline std::vector<AgentTranscript> load_cassette(const std::filesystem::path& path) {
  Json arr = read_json_file(path);
  if (!arr.is_array()) throw Error(ErrorCode::ParseFailure, "cassette is not a JSON array");
  std::vector<AgentTranscript> out;
  out.reserve(arr.size());
  for (const auto& item : arr) out.push_back(AgentTranscript::from_json(item));
  return out;
}

/// LLM boundary. Implementations must tolerate concurrent complete() calls.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual AgentTranscript complete(const CompletionRequest& request) = 0;
  virtual std::string kind() const = 0;
};

/// Serves recorded responses keyed by request content hash. Entries with the
/// same key replay in recording order.
class ReplayProvider : public Provider {
 public:
  ReplayProvider(std::vector<AgentTranscript> recorded, PriceTable prices)
      : prices_(prices) {
    for (auto& t : recorded) {
      entries_[cassette_key(t.request)].push_back(std::move(t));
    }
  }

  ReplayProvider(const std::filesystem::path& cassette_path, PriceTable prices)
      : ReplayProvider(load_cassette(cassette_path), prices) {}

  AgentTranscript complete(const CompletionRequest& request) override {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(cassette_key(request));
    if (it == entries_.end() || it->second.empty()) {
      throw Error(ErrorCode::ReplayMiss,
                  "no recorded response for request '" + request.request_id + "'");
    }
    AgentTranscript recorded = it->second.front();
    it->second.pop_front();
    AgentTranscript t;
    t.request = request;  // fresh request_id, identical content
    t.raw_response = recorded.raw_response;
    t.input_tokens = recorded.input_tokens;
    t.output_tokens = recorded.output_tokens;
    t.cost = prices_.cost(t.input_tokens, t.output_tokens);
    t.provider = "replay";
    return t;
  }

  std::string kind() const override { return "replay"; }

 private:
  std::unordered_map<std::string, std::deque<AgentTranscript>> entries_;
  PriceTable prices_;
  std::mutex mutex_;
};

/// Per-stage call/token/cost accumulators. Mutation is single-writer: the
/// pipeline folds transcripts in after parallel sections have joined.
struct StageTotals {
  std::size_t calls = 0;
  std::size_t input_tokens = 0;
  std::size_t output_tokens = 0;
  double cost = 0.0;
};

struct CostLedger {
  StageTotals discovery;
  StageTotals consolidation;
  StageTotals scoring;

  StageTotals& stage(Stage s) {
    switch (s) {
      case Stage::Discovery: return discovery;
      case Stage::Consolidation: return consolidation;
      case Stage::Scoring: return scoring;
    }
    return discovery;
  }

  const StageTotals& stage(Stage s) const {
    return const_cast<CostLedger*>(this)->stage(s);
  }

  void add(const AgentTranscript& t, Stage s) {
    StageTotals& totals = stage(s);
    totals.calls += 1;
    totals.input_tokens += t.input_tokens;
    totals.output_tokens += t.output_tokens;
    totals.cost += t.cost;
  }

  std::size_t total_calls() const { return discovery.calls + consolidation.calls + scoring.calls; }

  double total_cost() const { return discovery.cost + consolidation.cost + scoring.cost; }

  Json to_json() const {
    auto stage_json = [](const StageTotals& t) {
      return Json{{"calls", t.calls},
                  {"input_tokens", t.input_tokens},
                  {"output_tokens", t.output_tokens},
                  {"cost", t.cost}};
    };
    return Json{{"stages",
                 Json{{"discovery", stage_json(discovery)},
                      {"consolidation", stage_json(consolidation)},
                      {"scoring", stage_json(scoring)}}},
                {"total", Json{{"calls", total_calls()}, {"cost", total_cost()}}}};
  }
};

/// Functional form: returns the ledger advanced by one transcript.
inline CostLedger accumulate_cost(CostLedger ledger, const AgentTranscript& transcript,
                                  Stage stage) {
  ledger.add(transcript, stage);
  return ledger;
}

}  // namespace cofee::backend
