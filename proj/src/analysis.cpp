#include "usda/analysis.hpp"

#include "usda/error.hpp"
#include "usda/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

namespace usda::analysis {

using nlohmann::json;

json trace_to_json(const TraceRecord& r) {
  return {{"id", r.id},
          {"tag", r.tag},
          {"gold", r.gold},
          {"pred", r.predicted},
          {"p_use", r.trace.p_use},
          {"alpha_c", r.trace.alpha_c},
          {"alpha_a", r.trace.alpha_a},
          {"g", r.trace.g},
          {"predicted_da", r.predicted_da}};
}

TraceRecord trace_from_json(const json& j) {
  TraceRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.tag = j.value("tag", std::string());
    r.gold = j.at("gold").get<int>();
    r.predicted = j.at("pred").get<int>();
    r.trace.p_use = j.value("p_use", std::vector<double>{});
    r.trace.alpha_c = j.value("alpha_c", std::vector<double>{});
    r.trace.alpha_a = j.value("alpha_a", std::vector<double>{});
    r.trace.g = j.value("g", std::vector<double>{});
    r.predicted_da = j.value("predicted_da", std::vector<int>{});
  } catch (const json::exception& e) {
    throw Error(std::string("malformed trace: ") + e.what());
  }
  return r;
}

void write_traces(const std::filesystem::path& path, const std::vector<TraceRecord>& traces) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

std::vector<TraceRecord> read_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<TraceRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json record = json::parse(line);
      if (record.is_object() && !record.contains("id") && record.contains("manifest")) continue;
      out.push_back(trace_from_json(record));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TraceRecord> make_traces(const std::vector<Dialogue>& dialogues,
                                     const std::vector<Prediction>& predictions,
                                     const std::string& tag) {
  if (dialogues.size() != predictions.size()) throw Error("dialogues and predictions differ in size");
  std::vector<TraceRecord> out;
  for (std::size_t i = 0; i < dialogues.size(); ++i) {
    TraceRecord r;
    r.id = dialogues[i].id;
    r.tag = tag;
    r.gold = static_cast<int>(dialogues[i].satisfaction);
    r.predicted = predictions[i].satisfaction;
    r.trace = predictions[i].trace;
    r.predicted_da = predictions[i].dialogue_acts;
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

// Highest mean alpha_a over the occurrences of q, or nullopt if q is absent.
std::optional<double> best_occurrence(const TraceRecord& r, const std::vector<int>& q) {
  const auto& seq = r.predicted_da;
  std::optional<double> best;
  if (q.empty() || seq.size() < q.size()) return best;
  for (std::size_t s = 0; s + q.size() <= seq.size(); ++s) {
    if (!std::equal(q.begin(), q.end(), seq.begin() + static_cast<std::ptrdiff_t>(s))) continue;
    if (r.trace.alpha_a.size() != seq.size()) {
      throw Error("trace " + r.id + " has no DA attention aligned with its DA sequence");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) sum += r.trace.alpha_a[s + k];
    const double mean = sum / static_cast<double>(q.size());
    if (!best || mean > *best) best = mean;
  }
  return best;
}

double gate_weight(const TraceRecord& r, GateConvention convention) {
  const double g = r.trace.gate();
  return convention == GateConvention::kOneMinusG ? 1.0 - g : g;
}

}  // namespace

std::optional<double> impact_score(const std::vector<TraceRecord>& traces,
                                   const std::vector<int>& q, int c, GateConvention convention) {
  if (q.empty()) throw Error("impact_score: empty sub-sequence");
  std::size_t support = 0;
  double total = 0.0;
  for (const auto& r : traces) {
    const auto occ = best_occurrence(r, q);
    if (!occ) continue;
    ++support;
    if (r.predicted == c) total += gate_weight(r, convention) * *occ;
  }
  if (support == 0) return std::nullopt;
  return total / static_cast<double>(support);
}

std::vector<ImpactEntry> top_subsequences(const std::vector<TraceRecord>& traces, int c,
                                          int max_len, std::size_t top_n,
                                          std::size_t min_support, GateConvention convention) {
  if (max_len < 1) throw Error("max_len must be at least 1");
  // Distinct sub-sequences with the number of dialogues containing each.
  std::map<std::vector<int>, std::size_t> support;
  for (const auto& r : traces) {
    std::map<std::vector<int>, bool> local;
    const auto& seq = r.predicted_da;
    for (std::size_t s = 0; s < seq.size(); ++s) {
      for (std::size_t len = 1; len <= static_cast<std::size_t>(max_len) && s + len <= seq.size();
           ++len) {
        local[std::vector<int>(seq.begin() + static_cast<std::ptrdiff_t>(s),
                               seq.begin() + static_cast<std::ptrdiff_t>(s + len))] = true;
      }
    }
    for (const auto& [q, unused] : local) ++support[q];
  }
  std::vector<ImpactEntry> entries;
  for (const auto& [q, n] : support) {
    if (n < min_support) continue;
    entries.push_back({q, impact_score(traces, q, c, convention).value_or(0.0), n});
  }
  std::sort(entries.begin(), entries.end(), [](const ImpactEntry& a, const ImpactEntry& b) {
    if (a.impact != b.impact) return a.impact > b.impact;
    if (a.support != b.support) return a.support > b.support;
    return a.q < b.q;
  });
  if (entries.size() > top_n) entries.resize(top_n);
  return entries;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw Error("quantile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = p * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<GateSummary> gate_distribution(const std::vector<TraceRecord>& traces, int num_bins,
                                           bool one_minus) {
  if (traces.empty()) throw Error("gate_distribution: no traces");
  if (num_bins < 1) throw Error("num_bins must be positive");
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : traces) {
    if (r.trace.g.empty()) continue;
    const double g = r.trace.gate();
    groups[r.tag].push_back(one_minus ? 1.0 - g : g);
  }
  std::vector<GateSummary> out;
  for (auto& [tag, values] : groups) {
    std::sort(values.begin(), values.end());
    GateSummary s;
    s.group = tag;
    s.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.median = quantile(values, 0.5);
    s.q1 = quantile(values, 0.25);
    s.q3 = quantile(values, 0.75);
    s.min = values.front();
    s.max = values.back();
    s.bins.assign(static_cast<std::size_t>(num_bins), 0);
    for (double v : values) {
      auto b = static_cast<int>(std::floor(v * num_bins));
      b = std::clamp(b, 0, num_bins - 1);
      ++s.bins[static_cast<std::size_t>(b)];
    }
    out.push_back(std::move(s));
  }
  return out;
}

ClassificationReport per_class_report(const std::vector<TraceRecord>& traces) {
  std::vector<int> gold, pred;
  for (const auto& r : traces) {
    gold.push_back(r.gold);
    pred.push_back(r.predicted);
  }
  return classification_report(gold, pred, kNumSatisfactionClasses);
}

std::vector<TurnPoint> turn_sensitivity(const UsdaModel& model,
                                        const std::vector<Dialogue>& dialogues, int max_turns,
                                        int threads) {
  if (max_turns < 2) throw Error("max_turns must be at least 2");
  if (model.config().mode == Mode::kStlDar) throw Error("turn sensitivity needs a USE head");
  std::vector<TurnPoint> out;
  for (int n = 2; n <= max_turns; ++n) {
    std::vector<Dialogue> cut;
    cut.reserve(dialogues.size());
    for (const auto& d : dialogues) cut.push_back(truncate_dialogue(d, static_cast<std::size_t>(n)));
    const EvalReport report = evaluate(model, cut, threads);
    out.push_back({n, report.use->macro_f1, report.use->accuracy});
  }
  return out;
}

}  // namespace usda::analysis
