#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cofee/backend.hpp"
#include "cofee/core.hpp"
#include "cofee/errors.hpp"
#include "cofee/util.hpp"

namespace cofee::backend {

/// One deterministic discovery rule: when the trigger token appears anywhere
/// in a batch's attribute text, the mock proposes this feature. The token is
/// embedded in the emitted definition, which is what later lets the mock
/// scorer tag exactly the entities carrying it.
struct MockDiscoveryRule {
  std::string trigger_token;
  std::string feature_name;
  std::string subgoal;
  std::string causal_mechanism;
  std::string definition;
  std::string computation_logic;
  std::vector<std::pair<std::string, std::string>> abandoned_ideas;  // idea, reason
};

struct MockRulebook {
  std::vector<MockDiscoveryRule> discovery;

  std::vector<std::string> vocabulary() const {
    std::vector<std::string> tokens;
    tokens.reserve(discovery.size());
    for (const auto& rule : discovery) tokens.push_back(rule.trigger_token);
    return tokens;
  }

  Json to_json() const {
    Json rules = Json::array();
    for (const auto& r : discovery) {
      Json ideas = Json::array();
      for (const auto& [idea, reason] : r.abandoned_ideas) {
        ideas.push_back(Json{{"idea", idea}, {"reason", reason}});
      }
      rules.push_back(Json{{"trigger_token", r.trigger_token},
                           {"feature_name", r.feature_name},
                           {"subgoal", r.subgoal},
                           {"causal_mechanism", r.causal_mechanism},
                           {"definition", r.definition},
                           {"computation_logic", r.computation_logic},
                           {"abandoned_ideas", ideas}});
    }
    return Json{{"discovery", rules}};
  }

  static MockRulebook from_json(const Json& j) {
    MockRulebook book;
    try {
      for (const auto& r : j.at("discovery")) {
        MockDiscoveryRule rule;
        rule.trigger_token = r.at("trigger_token").get<std::string>();
        rule.feature_name = r.at("feature_name").get<std::string>();
        rule.subgoal = r.at("subgoal").get<std::string>();
        rule.causal_mechanism = r.at("causal_mechanism").get<std::string>();
        rule.definition = r.at("definition").get<std::string>();
        rule.computation_logic = r.at("computation_logic").get<std::string>();
        for (const auto& idea : r.value("abandoned_ideas", Json::array())) {
          rule.abandoned_ideas.emplace_back(idea.at("idea").get<std::string>(),
                                            idea.at("reason").get<std::string>());
        }
        book.discovery.push_back(std::move(rule));
      }
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ConfigError, std::string("bad mock rulebook: ") + e.what());
    }
    return book;
  }
};

namespace detail {

inline std::string lowercase(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline bool contains(std::string_view haystack, std::string_view needle) {
  return haystack.find(needle) != std::string_view::npos;
}

/// Sorted set of vocabulary tokens present in the text, as a grouping key.
inline std::string token_fingerprint(std::string_view text,
                                     const std::vector<std::string>& vocabulary) {
  std::set<std::string> found;
  for (const auto& token : vocabulary) {
    if (contains(text, token)) found.insert(token);
  }
  std::string key;
  for (const auto& token : found) {
    key += token;
    key += '\x1f';
  }
  return key;
}

inline Json mock_discovery_response(const Json& payload, const MockRulebook& rulebook) {
  std::string attribute_text;
  for (const auto& record : payload.at("records")) {
    attribute_text += record.at(kAttributesKey).dump();
    attribute_text += '\n';
  }
  Json features = Json::array();
  for (const auto& rule : rulebook.discovery) {
    if (!contains(attribute_text, rule.trigger_token)) continue;
    Json ideas = Json::array();
    for (const auto& [idea, reason] : rule.abandoned_ideas) {
      ideas.push_back(Json{{"idea", idea}, {"reason", reason}});
    }
    features.push_back(Json{{"feature_name", rule.feature_name},
                            {"subgoal", rule.subgoal},
                            {"causal_mechanism", rule.causal_mechanism},
                            {"definition", rule.definition},
                            {"computation_logic", rule.computation_logic},
                            {"abandoned_ideas", ideas}});
  }
  return Json{{"batch_id", payload.at("batch_id")}, {"features", features}};
}

/// Groups presented features that share an identical name (case-insensitive)
/// or whose definitions carry the same non-empty marker-token set, then emits
/// one conservative merge decision (<= 5 members) per group chunk.
inline Json mock_merge_response(const Json& payload, const MockRulebook& rulebook) {
  const auto vocabulary = rulebook.vocabulary();
  const Json& features = payload.at("features");
  const std::size_t n = features.size();

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  auto unite = [&](std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent[b] = a;
  };

  std::map<std::string, std::size_t> by_name;
  std::map<std::string, std::size_t> by_tokens;
  std::vector<std::string> fingerprints(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string name_key = lowercase(features[i].at("feature_name").get<std::string>());
    auto [name_it, name_new] = by_name.try_emplace(name_key, i);
    if (!name_new) unite(i, name_it->second);
    fingerprints[i] =
        token_fingerprint(features[i].at("definition").get<std::string>(), vocabulary);
    if (!fingerprints[i].empty()) {
      auto [tok_it, tok_new] = by_tokens.try_emplace(fingerprints[i], i);
      if (!tok_new) unite(i, tok_it->second);
    }
  }

  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[find(i)].push_back(i);

  Json decisions = Json::array();
  for (const auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    std::size_t begin = 0;
    while (begin < members.size()) {
      std::size_t len = std::min<std::size_t>(5, members.size() - begin);
      if (members.size() - begin - len == 1) --len;  // never leave a singleton chunk
      Json ids = Json::array();
      for (std::size_t k = begin; k < begin + len; ++k) {
        ids.push_back(features[members[k]].at("feature_id"));
      }
      const Json& first = features[members[begin]];
      const bool same_tokens = !fingerprints[members[begin]].empty() &&
                               fingerprints[members[begin]] == fingerprints[members[begin + 1]];
      decisions.push_back(
          Json{{"merged_name", first.at("feature_name")},
               {"member_feature_ids", ids},
               {"justification", same_tokens
                                     ? "definitions reference the same marker tokens"
                                     : "identical feature name describes the same mechanism"}});
      begin += len;
    }
  }
  return decisions;
}

inline Json mock_assignment_response(const Json& payload, const MockRulebook& rulebook) {
  const auto vocabulary = rulebook.vocabulary();
  Json assignments = Json::object();
  for (const auto& feature : payload.at("features")) {
    const std::string definition = feature.at("definition").get<std::string>();
    std::vector<std::string> active;
    for (const auto& token : vocabulary) {
      if (contains(definition, token)) active.push_back(token);
    }
    Json tagged = Json::array();
    if (!active.empty()) {
      for (const auto& record : payload.at("records")) {
        const std::string text = record.at(kAttributesKey).dump();
        for (const auto& token : active) {
          if (contains(text, token)) {
            tagged.push_back(record.at(kEntityIdKey));
            break;
          }
        }
      }
    }
    assignments[feature.at("feature_id").get<std::string>()] = tagged;
  }
  return Json{{"assignments", assignments}};
}

}  // namespace detail

/// Deterministic rule-based completion: a pure function of (request, rulebook).
inline AgentTranscript mock_complete(const CompletionRequest& request,
                                     const MockRulebook& rulebook,
                                     PriceTable prices = PriceTable{}) {
  Json payload = parse_json(request.user_payload, "mock request payload");
  Json response;
  if (request.schema_id == kDiscoverySchema) {
    response = detail::mock_discovery_response(payload, rulebook);
  } else if (request.schema_id == kMergeSchema) {
    response = detail::mock_merge_response(payload, rulebook);
  } else if (request.schema_id == kAssignmentSchema) {
    response = detail::mock_assignment_response(payload, rulebook);
  } else {
    throw Error(ErrorCode::UnknownSchema,
                "mock rulebook does not cover schema '" + request.schema_id + "'");
  }
  AgentTranscript t;
  t.request = request;
  t.raw_response = response.dump();
  t.input_tokens =
      approx_token_count(request.system_prompt) + approx_token_count(request.user_payload);
  t.output_tokens = approx_token_count(t.raw_response);
  t.cost = prices.cost(t.input_tokens, t.output_tokens);
  t.provider = "mock";
  return t;
}

class MockProvider : public Provider {
 public:
  explicit MockProvider(MockRulebook rulebook, PriceTable prices = PriceTable{})
      : rulebook_(std::move(rulebook)), prices_(prices) {}

  AgentTranscript complete(const CompletionRequest& request) override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return mock_complete(request, rulebook_, prices_);
  }

  std::string kind() const override { return "mock"; }

  std::size_t call_count() const { return calls_.load(std::memory_order_relaxed); }

 private:
  MockRulebook rulebook_;
  PriceTable prices_;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace cofee::backend
