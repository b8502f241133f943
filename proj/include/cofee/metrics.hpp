#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cofee/core.hpp"
#include "cofee/errors.hpp"
#include "cofee/util.hpp"

namespace cofee::metrics {

struct PopulationCounts {
  std::size_t n1 = 0;  // total successful
  std::size_t n0 = 0;  // total unsuccessful

  std::size_t total() const { return n1 + n0; }
  double base_rate() const { return static_cast<double>(n1) / static_cast<double>(total()); }
};

inline PopulationCounts population_of(const Dataset& dataset) {
  return PopulationCounts{dataset.n1, dataset.n0};
}

/// Default marginal-support cutoff: 10% of a 1,000-entity sample. At n = 100
/// a binomial proportion has standard error at most sqrt(0.25/100) = 0.05.
inline constexpr std::size_t kDefaultMinSupportCount = 100;
inline constexpr double kMaxStandardErrorAtCutoff = 0.05;

inline void check_counts(std::size_t n1, std::size_t n0, PopulationCounts pop) {
  if (pop.total() == 0) throw Error(ErrorCode::InvalidCounts, "empty population");
  if (n1 > pop.n1 || n0 > pop.n0) {
    throw Error(ErrorCode::InvalidCounts,
                "feature counts (" + std::to_string(n1) + ", " + std::to_string(n0) +
                    ") exceed population (" + std::to_string(pop.n1) + ", " +
                    std::to_string(pop.n0) + ")");
  }
}

/// Class-conditional counts of an assignment set against a labeled dataset:
/// n1 = |assignment ∩ successful|, n0 = |assignment ∩ unsuccessful|.
inline std::pair<std::size_t, std::size_t> count_feature(const std::set<std::string>& assignment,
                                                         const Dataset& dataset) {
  std::unordered_map<std::string, Outcome> outcomes;
  outcomes.reserve(dataset.records.size());
  for (const auto& record : dataset.records) {
    outcomes.emplace(record.entity_id, record.outcome.value());
  }
  std::size_t n1 = 0;
  std::size_t n0 = 0;
  for (const auto& id : assignment) {
    auto it = outcomes.find(id);
    if (it == outcomes.end()) {
      throw Error(ErrorCode::UnknownEntityId, "entity '" + id + "' not in scored dataset");
    }
    if (it->second == Outcome::Success) {
      ++n1;
    } else {
      ++n0;
    }
  }
  return {n1, n0};
}

/// Success-rate delta: P(success | feature) − P(success | no feature).
/// Undefined when the feature covers none or all of the population.
inline double delta_sr(std::size_t n1, std::size_t n0, PopulationCounts pop) {
  check_counts(n1, n0, pop);
  const std::size_t n = n1 + n0;
  if (n == 0) throw Error(ErrorCode::ZeroSupport, "feature present in no entity");
  if (n == pop.total()) throw Error(ErrorCode::FullSupport, "feature present in every entity");
  const double with_rate = static_cast<double>(n1) / static_cast<double>(n);
  const double rest1 = static_cast<double>(pop.n1 - n1);
  const double rest0 = static_cast<double>(pop.n0 - n0);
  const double without_rate = rest1 / (rest1 + rest0);
  return with_rate - without_rate;
}

/// Full stats row: precision, support, lift against the population base rate,
/// plus delta_sr where defined (full-support features get no delta_sr).
inline FeatureStats extended_stats(std::size_t n1, std::size_t n0, PopulationCounts pop,
                                   std::string feature_id = {}) {
  check_counts(n1, n0, pop);
  const std::size_t n = n1 + n0;
  if (n == 0) throw Error(ErrorCode::ZeroSupport, "feature present in no entity");
  FeatureStats stats;
  stats.feature_id = std::move(feature_id);
  stats.n1 = n1;
  stats.n0 = n0;
  stats.precision = static_cast<double>(n1) / static_cast<double>(n);
  stats.support = static_cast<double>(n) / static_cast<double>(pop.total());
  stats.base_rate = pop.base_rate();
  stats.lift = stats.base_rate > 0.0 ? stats.precision / stats.base_rate : 0.0;
  if (n < pop.total()) stats.delta_sr = delta_sr(n1, n0, pop);
  return stats;
}

/// Stats row for a feature no entity exhibits: zero support, no delta_sr.
inline FeatureStats zero_support_stats(std::string feature_id, PopulationCounts pop) {
  FeatureStats stats;
  stats.feature_id = std::move(feature_id);
  stats.base_rate = pop.base_rate();
  return stats;
}

/// Stats for every feature in the matrix, in matrix (sorted feature_id) order.
inline std::vector<FeatureStats> stats_for_matrix(const AssignmentMatrix& matrix,
                                                  const Dataset& dataset) {
  const PopulationCounts pop = population_of(dataset);
  std::vector<FeatureStats> rows;
  rows.reserve(matrix.assignments.size());
  for (const auto& [fid, ids] : matrix.assignments) {
    if (ids.empty()) {
      rows.push_back(zero_support_stats(fid, pop));
      continue;
    }
    auto [n1, n0] = count_feature(ids, dataset);
    rows.push_back(extended_stats(n1, n0, pop, fid));
  }
  return rows;
}

/// Keeps features with n1 + n0 >= min_count (inclusive), order preserved.
inline std::vector<FeatureStats> filter_by_support(const std::vector<FeatureStats>& stats,
                                                   std::size_t min_count = kDefaultMinSupportCount) {
  std::vector<FeatureStats> out;
  for (const auto& s : stats) {
    if (s.n1 + s.n0 >= min_count) out.push_back(s);
  }
  return out;
}

/// Top-k by descending delta_sr. Ties break toward larger support, then
/// lexicographically smaller feature_id. Rows without a defined delta_sr are
/// excluded rather than given sentinel values.
inline std::vector<FeatureStats> rank_top_k(const std::vector<FeatureStats>& stats, std::size_t k) {
  std::vector<FeatureStats> ranked;
  for (const auto& s : stats) {
    if (s.delta_sr) ranked.push_back(s);
  }
  std::sort(ranked.begin(), ranked.end(), [](const FeatureStats& a, const FeatureStats& b) {
    if (*a.delta_sr != *b.delta_sr) return *a.delta_sr > *b.delta_sr;
    if (a.support != b.support) return a.support > b.support;
    return a.feature_id < b.feature_id;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

struct SummaryStats {
  double mean = 0.0;
  double median = 0.0;
};

/// Mean and median of the delta_sr values of a ranked list.
inline SummaryStats summarize(const std::vector<FeatureStats>& ranked) {
  std::vector<double> values;
  values.reserve(ranked.size());
  for (const auto& s : ranked) {
    if (!s.delta_sr) throw Error(ErrorCode::EmptyInput, "undefined delta_sr in ranked list");
    values.push_back(*s.delta_sr);
  }
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "nothing to summarize");
  double sum = 0.0;
  for (double v : values) sum += v;
  std::vector<double> sorted = values;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  double median = (n % 2 == 1) ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;
  return SummaryStats{sum / static_cast<double>(n), median};
}

/// One condition's run-level summary, as persisted in summary.json.
struct RunSummary {
  std::string condition;
  double mean_delta_sr = 0.0;
  double median_delta_sr = 0.0;
  std::size_t feature_count = 0;  // total features generated (frozen set size)
  double total_cost = 0.0;

  Json to_json() const {
    return Json{{"condition", condition},
                {"mean_delta_sr", mean_delta_sr},
                {"median_delta_sr", median_delta_sr},
                {"feature_count", feature_count},
                {"total_cost", total_cost}};
  }

  static RunSummary from_json(const Json& j) {
    RunSummary s;
    try {
      s.condition = j.at("condition").get<std::string>();
      s.mean_delta_sr = j.at("mean_delta_sr").get<double>();
      s.median_delta_sr = j.at("median_delta_sr").get<double>();
      s.feature_count = j.at("feature_count").get<std::size_t>();
      s.total_cost = j.at("total_cost").get<double>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("bad run summary: ") + e.what());
    }
    return s;
  }
};

/// Two-condition comparison. Relative deltas are always recomputed from the
/// stored per-condition summaries, never cached.
struct ComparisonReport {
  RunSummary a;  // condition under test (numerators)
  RunSummary b;  // baseline (denominators)

  double mean_uplift() const {
    if (b.mean_delta_sr == 0.0) throw Error(ErrorCode::DivisionByZero, "baseline mean is zero");
    return a.mean_delta_sr / b.mean_delta_sr - 1.0;
  }

  double feature_count_reduction() const {
    if (b.feature_count == 0) throw Error(ErrorCode::DivisionByZero, "baseline count is zero");
    return 1.0 - static_cast<double>(a.feature_count) / static_cast<double>(b.feature_count);
  }

  double cost_reduction() const {
    if (b.total_cost == 0.0) throw Error(ErrorCode::DivisionByZero, "baseline cost is zero");
    return 1.0 - a.total_cost / b.total_cost;
  }

  Json to_json() const {
    return Json{{"a", a.to_json()},
                {"b", b.to_json()},
                {"relative",
                 Json{{"mean_uplift", mean_uplift()},
                      {"feature_count_reduction", feature_count_reduction()},
                      {"cost_reduction", cost_reduction()}}}};
  }
};

inline ComparisonReport compare_conditions(const RunSummary& a, const RunSummary& b) {
  return ComparisonReport{a, b};
}

// ---------------------------------------------------------------------------
// Stats export / import. Columns match the reporting tables:
// feature_id, n1, n0, delta_sr, precision, lift, support.
// ---------------------------------------------------------------------------

inline Json stats_to_json(const std::vector<FeatureStats>& stats) {
  Json rows = Json::array();
  for (const auto& s : stats) {
    Json row = Json{{"feature_id", s.feature_id},
                    {"n1", s.n1},
                    {"n0", s.n0},
                    {"delta_sr", s.delta_sr ? Json(*s.delta_sr) : Json(nullptr)},
                    {"precision", s.precision},
                    {"lift", s.lift},
                    {"support", s.support},
                    {"base_rate", s.base_rate}};
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<FeatureStats> stats_from_json(const Json& rows) {
  std::vector<FeatureStats> out;
  if (!rows.is_array()) throw Error(ErrorCode::ParseFailure, "stats JSON is not an array");
  for (const auto& row : rows) {
    FeatureStats s;
    try {
      s.feature_id = row.at("feature_id").get<std::string>();
      s.n1 = row.at("n1").get<std::size_t>();
      s.n0 = row.at("n0").get<std::size_t>();
      if (!row.at("delta_sr").is_null()) s.delta_sr = row.at("delta_sr").get<double>();
      s.precision = row.at("precision").get<double>();
      s.lift = row.at("lift").get<double>();
      s.support = row.at("support").get<double>();
      if (row.contains("base_rate")) s.base_rate = row.at("base_rate").get<double>();
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::ParseFailure, std::string("bad stats row: ") + e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline constexpr const char* kStatsCsvHeader = "feature_id,n1,n0,delta_sr,precision,lift,support";

inline std::string stats_to_csv(const std::vector<FeatureStats>& stats) {
  std::ostringstream out;
  out << kStatsCsvHeader << "\n";
  for (const auto& s : stats) {
    out << s.feature_id << "," << s.n1 << "," << s.n0 << ","
        << (s.delta_sr ? format_double(*s.delta_sr) : "") << "," << format_double(s.precision)
        << "," << format_double(s.lift) << "," << format_double(s.support) << "\n";
  }
  return out.str();
}

inline std::vector<FeatureStats> stats_from_csv(const std::string& text, double base_rate = 0.0) {
  std::vector<FeatureStats> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kStatsCsvHeader) throw ParseError(1, "unexpected CSV header");
      continue;
    }
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream cells_in(line);
    while (std::getline(cells_in, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (cells.size() != 7) throw ParseError(line_no, "expected 7 columns");
    FeatureStats s;
    s.feature_id = cells[0];
    try {
      s.n1 = static_cast<std::size_t>(std::stoull(cells[1]));
      s.n0 = static_cast<std::size_t>(std::stoull(cells[2]));
    } catch (const std::exception&) {
      throw ParseError(line_no, "bad count column");
    }
    if (!cells[3].empty()) s.delta_sr = parse_double(cells[3], "delta_sr");
    s.precision = parse_double(cells[4], "precision");
    s.lift = parse_double(cells[5], "lift");
    s.support = parse_double(cells[6], "support");
    s.base_rate = base_rate;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cofee::metrics
