#include "usda/corpus.hpp"

#include "usda/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace usda {

using nlohmann::json;

Satisfaction map_rating(double avg_rating) {
  if (!(avg_rating >= 1.0 && avg_rating <= 5.0)) {
    throw Error("rating out of range [1,5]: " + std::to_string(avg_rating));
  }
  if (avg_rating < 3.0) return Satisfaction::kDissatisfied;
  if (avg_rating == 3.0) return Satisfaction::kNeutral;
  return Satisfaction::kSatisfied;
}

const char* satisfaction_name(Satisfaction s) {
  switch (s) {
    case Satisfaction::kDissatisfied:
      return "dissatisfied";
    case Satisfaction::kNeutral:
      return "neutral";
    case Satisfaction::kSatisfied:
      return "satisfied";
  }
  return "?";
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

void validate_dialogue(const Dialogue& d, const std::optional<DaVocab>& vocab) {
  if (d.id.empty()) throw Error("dialogue has empty id");
  if (d.exchanges.empty()) throw Error("dialogue " + d.id + " has no exchanges");
  for (std::size_t t = 0; t < d.exchanges.size(); ++t) {
    const auto& ex = d.exchanges[t];
    if (trim(ex.user.text).empty()) {
      throw Error("dialogue " + d.id + ": empty user utterance at exchange " + std::to_string(t));
    }
    if (ex.system.has_value()) {
      if (trim(ex.system->text).empty()) {
        throw Error("dialogue " + d.id + ": empty system utterance at exchange " +
                    std::to_string(t));
      }
    } else if (t + 1 != d.exchanges.size()) {
      throw Error("dialogue " + d.id + ": missing system utterance before the final exchange");
    }
  }
  if (d.da_labels.has_value()) {
    if (d.da_labels->size() != d.exchanges.size()) {
      throw Error("dialogue " + d.id + ": da_labels length differs from number of exchanges");
    }
    for (int label : *d.da_labels) {
      if (label < 0 || (vocab.has_value() && label >= static_cast<int>(vocab->size()))) {
        throw Error("dialogue " + d.id + ": da label " + std::to_string(label) +
                    " outside the declared vocabulary");
      }
    }
  }
  if (d.raw_rating.has_value() && !(*d.raw_rating >= 1.0 && *d.raw_rating <= 5.0)) {
    throw Error("dialogue " + d.id + ": rating out of range [1,5]");
  }
}

Dialogue dialogue_from_json(const json& record) {
  if (!record.is_object()) throw Error("record is not an object");
  Dialogue d;
  if (!record.contains("id")) throw Error("missing field 'id'");
  d.id = record.at("id").is_string() ? record.at("id").get<std::string>()
                                     : record.at("id").dump();
  if (!record.contains("exchanges") || !record.at("exchanges").is_array()) {
    throw Error("missing field 'exchanges'");
  }
  for (const auto& ex : record.at("exchanges")) {
    if (!ex.is_object() || !ex.contains("user") || !ex.at("user").is_string()) {
      throw Error("exchange without a 'user' string");
    }
    Exchange e;
    e.user = {Speaker::kUser, ex.at("user").get<std::string>(), {}};
    if (ex.contains("system") && !ex.at("system").is_null()) {
      if (!ex.at("system").is_string()) throw Error("exchange 'system' must be a string or null");
      e.system = Utterance{Speaker::kSystem, ex.at("system").get<std::string>(), {}};
    }
    d.exchanges.push_back(std::move(e));
  }
  if (record.contains("da_labels") && !record.at("da_labels").is_null()) {
    const auto& labels = record.at("da_labels");
    if (!labels.is_array()) throw Error("'da_labels' must be an array or null");
    std::vector<int> out;
    for (const auto& l : labels) {
      if (!l.is_number_integer()) throw Error("'da_labels' entries must be integers");
      out.push_back(l.get<int>());
    }
    d.da_labels = std::move(out);
  }
  const bool has_sat = record.contains("satisfaction") && !record.at("satisfaction").is_null();
  const bool has_rating = record.contains("rating") && !record.at("rating").is_null();
  if (has_rating) {
    if (!record.at("rating").is_number()) throw Error("'rating' must be a number");
    d.raw_rating = record.at("rating").get<double>();
  }
  if (has_sat) {
    const auto& s = record.at("satisfaction");
    if (!s.is_number_integer()) throw Error("'satisfaction' must be an integer in {0,1,2}");
    const int v = s.get<int>();
    if (v < 0 || v > 2) throw Error("'satisfaction' must be in {0,1,2}");
    d.satisfaction = static_cast<Satisfaction>(v);
  } else if (has_rating) {
    d.satisfaction = map_rating(*d.raw_rating);
  } else {
    throw Error("missing field 'satisfaction' (or 'rating')");
  }
  return d;
}

json dialogue_to_json(const Dialogue& d) {
  json exchanges = json::array();
  for (const auto& ex : d.exchanges) {
    json e;
    e["user"] = ex.user.text;
    e["system"] = ex.system ? json(ex.system->text) : json(nullptr);
    exchanges.push_back(std::move(e));
  }
  json out;
  out["id"] = d.id;
  out["exchanges"] = std::move(exchanges);
  out["da_labels"] = d.da_labels ? json(*d.da_labels) : json(nullptr);
  out["satisfaction"] = static_cast<int>(d.satisfaction);
  if (d.raw_rating) out["rating"] = *d.raw_rating;
  return out;
}

LoadedCorpus parse_dialogues(std::istream& in, const std::string& source) {
  LoadedCorpus corpus;
  std::unordered_set<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::size_t, Dialogue>> pending;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto where = source + ":" + std::to_string(line_no) + ": ";
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(where + "malformed record: " + e.what());
    }
    if (record.is_object() && !record.contains("id") &&
        (record.contains("da_vocab") || record.contains("manifest"))) {
      if (!record.contains("da_vocab")) continue;
      if (corpus.da_vocab.has_value()) throw Error(where + "duplicate da_vocab header");
      try {
        corpus.da_vocab = record.at("da_vocab").get<DaVocab>();
      } catch (const json::exception& e) {
        throw Error(where + "malformed da_vocab header: " + e.what());
      }
      continue;
    }
    try {
      Dialogue d = dialogue_from_json(record);
      if (!ids.insert(d.id).second) throw Error("duplicate dialogue id " + d.id);
      pending.emplace_back(line_no, std::move(d));
    } catch (const Error& e) {
      throw Error(where + e.what());
    }
  }
  for (auto& [ln, d] : pending) {
    try {
      validate_dialogue(d, corpus.da_vocab);
    } catch (const Error& e) {
      throw Error(source + ":" + std::to_string(ln) + ": " + e.what());
    }
    if (d.exchanges.size() < 2) {
      ++corpus.dropped_short;
      continue;
    }
    corpus.dialogues.push_back(std::move(d));
  }
  return corpus;
}

LoadedCorpus read_dialogues(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path.string());
  return parse_dialogues(in, path.string());
}

void write_dialogues(std::ostream& out, const std::vector<Dialogue>& dialogues,
                     const std::optional<DaVocab>& vocab) {
  if (vocab) out << json{{"da_vocab", *vocab}}.dump() << '\n';
  for (const auto& d : dialogues) out << dialogue_to_json(d).dump() << '\n';
}

void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues,
                     const std::optional<DaVocab>& vocab) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  write_dialogues(out, dialogues, vocab);
}

namespace {

std::size_t portion(std::size_t n, double ratio) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
}

void split_group(std::vector<Dialogue>& group, const SplitOptions& o, CorpusSplit& out) {
  const double total = o.train + o.valid + o.test;
  const std::size_t n = group.size();
  const std::size_t n_train = portion(n, o.train / total);
  const std::size_t n_valid = std::min(n - n_train, portion(n, o.valid / total));
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? out.train : (i < n_train + n_valid ? out.valid : out.test);
    dst.push_back(std::move(group[i]));
  }
}

}  // namespace

CorpusSplit split_corpus(LoadedCorpus corpus, const SplitOptions& options) {
  if (options.train < 0 || options.valid < 0 || options.test < 0 ||
      options.train + options.valid + options.test <= 0) {
    throw Error("split ratios must be non-negative and not all zero");
  }
  CorpusSplit out;
  out.da_vocab = std::move(corpus.da_vocab);
  out.dropped_short = corpus.dropped_short;
  std::mt19937_64 rng(options.seed);
  auto& all = corpus.dialogues;
  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  if (!options.stratified) {
    std::vector<Dialogue> shuffled;
    shuffled.reserve(all.size());
    for (auto i : order) shuffled.push_back(std::move(all[i]));
    split_group(shuffled, options, out);
    return out;
  }
  std::map<int, std::vector<Dialogue>> groups;
  for (auto i : order) groups[static_cast<int>(all[i].satisfaction)].push_back(std::move(all[i]));
  for (auto& [cls, group] : groups) split_group(group, options, out);
  return out;
}

CorpusSplit apply_split_manifest(LoadedCorpus corpus, const SplitManifest& manifest) {
  CorpusSplit out;
  out.da_vocab = std::move(corpus.da_vocab);
  out.dropped_short = corpus.dropped_short;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) index[corpus.dialogues[i].id] = i;
  std::unordered_set<std::string> seen;
  auto take = [&](const std::vector<std::string>& ids, std::vector<Dialogue>& dst) {
    for (const auto& id : ids) {
      if (!seen.insert(id).second) throw Error("split manifest lists id twice: " + id);
      auto it = index.find(id);
      // Ids of dialogues dropped as too short are skipped.
      if (it == index.end()) continue;
      dst.push_back(corpus.dialogues[it->second]);
    }
  };
  take(manifest.train, out.train);
  take(manifest.valid, out.valid);
  take(manifest.test, out.test);
  return out;
}

SplitManifest read_split_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split manifest: " + path.string());
  json j;
  try {
    in >> j;
    SplitManifest m;
    m.train = j.at("train").get<std::vector<std::string>>();
    m.valid = j.at("valid").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw Error("malformed split manifest " + path.string() + ": " + e.what());
  }
}

void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& split) {
  auto ids = [](const std::vector<Dialogue>& ds) {
    std::vector<std::string> out;
    for (const auto& d : ds) out.push_back(d.id);
    return out;
  };
  json j{{"train", ids(split.train)}, {"valid", ids(split.valid)}, {"test", ids(split.test)}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write split manifest: " + path.string());
  out << j.dump(1) << '\n';
}

CorpusSplit load_corpus(const std::filesystem::path& path, CorpusFormat format,
                        const SplitOptions& options,
                        const std::optional<std::filesystem::path>& manifest) {
  if (format != CorpusFormat::kJsonLines) throw Error("unsupported corpus format");
  LoadedCorpus corpus = read_dialogues(path);
  if (manifest) return apply_split_manifest(std::move(corpus), read_split_manifest(*manifest));
  return split_corpus(std::move(corpus), options);
}

int num_da_classes(const CorpusSplit& split) {
  if (split.da_vocab) return static_cast<int>(split.da_vocab->size());
  int max_label = -1;
  for (const auto* part : {&split.train, &split.valid, &split.test}) {
    for (const auto& d : *part) {
      if (!d.da_labels) continue;
      for (int l : *d.da_labels) max_label = std::max(max_label, l);
    }
  }
  return max_label + 1;
}

Dialogue truncate_dialogue(const Dialogue& d, std::size_t n) {
  if (n == 0) throw Error("truncate_dialogue: n must be at least 1");
  if (n >= d.exchanges.size()) return d;
  Dialogue out = d;
  out.exchanges.resize(n);
  if (out.da_labels) out.da_labels->resize(n);
  return out;
}

}  // namespace usda
