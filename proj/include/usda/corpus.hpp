// Dialogue data model, line-delimited JSON ingestion and train/valid/test splits.
//
// One dialogue per line:
//   {"id": "d1",
//    "exchanges": [{"user": "...", "system": "..."}, ..., {"user": "...", "system": null}],
//    "da_labels": [3, 1, 0] | null,
//    "satisfaction": 0 | 1 | 2,          (or)   "rating": 2.5}
// An optional header line {"da_vocab": ["greet", "inform", ...]} declares the
// dialogue-act inventory; labels outside it are rejected. Header lines may also
// carry a "manifest" key naming the run manifest.

#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace usda {

enum class Speaker { kUser, kSystem };

enum class Satisfaction : int { kDissatisfied = 0, kNeutral = 1, kSatisfied = 2 };
inline constexpr int kNumSatisfactionClasses = 3;

struct Utterance {
  Speaker speaker = Speaker::kUser;
  std::string text;
  std::vector<int> tokens;  // filled by Vocabulary::tokenize

  bool operator==(const Utterance&) const = default;
};

struct Exchange {
  Utterance user;
  std::optional<Utterance> system;  // absent only in the final exchange

  bool operator==(const Exchange&) const = default;
};

struct Dialogue {
  std::string id;
  std::vector<Exchange> exchanges;
  std::optional<std::vector<int>> da_labels;
  Satisfaction satisfaction = Satisfaction::kNeutral;
  std::optional<double> raw_rating;

  std::size_t turns() const { return exchanges.size(); }
  bool operator==(const Dialogue&) const = default;
};

using DaVocab = std::vector<std::string>;

struct LoadedCorpus {
  std::vector<Dialogue> dialogues;
  std::optional<DaVocab> da_vocab;
  std::size_t dropped_short = 0;  // dialogues with fewer than 2 exchanges
};

struct CorpusSplit {
  std::vector<Dialogue> train, valid, test;
  std::optional<DaVocab> da_vocab;
  std::size_t dropped_short = 0;
};

enum class CorpusFormat { kJsonLines };

struct SplitOptions {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
  std::uint64_t seed = 0;
  bool stratified = false;  // stratify by satisfaction class
};

struct SplitManifest {
  std::vector<std::string> train, valid, test;
};

/// avg rating < 3 -> dissatisfied, == 3 -> neutral, > 3 -> satisfied.
Satisfaction map_rating(double avg_rating);

const char* satisfaction_name(Satisfaction s);
std::string trim(const std::string& s);

/// Checks the Dialogue/Exchange invariants except the T >= 2 filter.
void validate_dialogue(const Dialogue& d, const std::optional<DaVocab>& vocab);

Dialogue dialogue_from_json(const nlohmann::json& record);
nlohmann::json dialogue_to_json(const Dialogue& d);

LoadedCorpus parse_dialogues(std::istream& in, const std::string& source = "<stream>");
LoadedCorpus read_dialogues(const std::filesystem::path& path);
void write_dialogues(std::ostream& out, const std::vector<Dialogue>& dialogues,
                     const std::optional<DaVocab>& vocab);
void write_dialogues(const std::filesystem::path& path, const std::vector<Dialogue>& dialogues,
                     const std::optional<DaVocab>& vocab);

CorpusSplit split_corpus(LoadedCorpus corpus, const SplitOptions& options);
CorpusSplit apply_split_manifest(LoadedCorpus corpus, const SplitManifest& manifest);

SplitManifest read_split_manifest(const std::filesystem::path& path);
void write_split_manifest(const std::filesystem::path& path, const CorpusSplit& split);

/// Reads `path`, drops short dialogues, then splits by `manifest` when given or
/// by `options` otherwise.
CorpusSplit load_corpus(const std::filesystem::path& path, CorpusFormat format,
                        const SplitOptions& options = {},
                        const std::optional<std::filesystem::path>& manifest = std::nullopt);

/// Number of DA classes implied by the vocabulary or, failing that, the labels.
int num_da_classes(const CorpusSplit& split);

/// Keeps the first `n` exchanges (n >= 1).
Dialogue truncate_dialogue(const Dialogue& d, std::size_t n);

}  // namespace usda
