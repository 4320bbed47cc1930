// Post-hoc analyses over serialized fusion traces: DA sub-sequence impact
// scores, gate distributions, per-class reports and turn-count sensitivity.

#pragma once

#include "usda/metrics.hpp"
#include "usda/model.hpp"
#include "usda/satisfaction.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace usda::analysis {

struct TraceRecord {
  std::string id;
  std::string tag;  // grouping key, e.g. mode or dataset
  int gold = 0;
  int predicted = 0;
  satisfaction::FusionTrace trace;
  std::vector<int> predicted_da;
};

nlohmann::json trace_to_json(const TraceRecord& r);
TraceRecord trace_from_json(const nlohmann::json& j);
void write_traces(const std::filesystem::path& path, const std::vector<TraceRecord>& traces);
std::vector<TraceRecord> read_traces(const std::filesystem::path& path);

std::vector<TraceRecord> make_traces(const std::vector<Dialogue>& dialogues,
                                     const std::vector<Prediction>& predictions,
                                     const std::string& tag);

/// Which gate weight multiplies the DA attention: (1 - g) as in the impact
/// formula, or g as in the fusion.
enum class GateConvention { kOneMinusG, kG };

/// imp(Q, C) = 1/|S_Q| * sum over S_Q^C of w(g) * max over occurrences of
/// mean(alpha_a over the occurrence). nullopt when no dialogue contains Q.
std::optional<double> impact_score(const std::vector<TraceRecord>& traces,
                                   const std::vector<int>& q, int c,
                                   GateConvention convention = GateConvention::kOneMinusG);

struct ImpactEntry {
  std::vector<int> q;
  double impact = 0.0;
  std::size_t support = 0;  // |S_Q|
};

/// Contiguous predicted-DA sub-sequences of length 1..max_len with support >=
/// min_support, by impact descending (ties: support descending, then q).
std::vector<ImpactEntry> top_subsequences(const std::vector<TraceRecord>& traces, int c,
                                          int max_len, std::size_t top_n,
                                          std::size_t min_support = 5,
                                          GateConvention convention = GateConvention::kOneMinusG);

struct GateSummary {
  std::string group;
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<std::size_t> bins;  // equal width over [0, 1]
};

/// Quartiles interpolate linearly between order statistics. Groups by tag,
/// sorted by name. With `one_minus` the statistics are over 1 - g.
std::vector<GateSummary> gate_distribution(const std::vector<TraceRecord>& traces,
                                           int num_bins = 10, bool one_minus = false);

double quantile(std::vector<double> values, double p);

/// Gold vs predicted satisfaction over the traces.
ClassificationReport per_class_report(const std::vector<TraceRecord>& traces);

struct TurnPoint {
  int turns = 0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// USE metrics with every dialogue cut to its first n exchanges, n = 2..max_turns.
std::vector<TurnPoint> turn_sensitivity(const UsdaModel& model,
                                        const std::vector<Dialogue>& dialogues, int max_turns,
                                        int threads = 1);

}  // namespace usda::analysis
