#include "usda/vocabulary.hpp"

#include "usda/error.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace usda {

namespace {
const std::vector<std::string> kSpecials = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
}

Vocabulary::Vocabulary() : Vocabulary(kSpecials) {}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
  for (std::size_t i = 0; i < kSpecials.size(); ++i) {
    if (i >= words_.size() || words_[i] != kSpecials[i]) {
      throw Error("vocabulary must start with [PAD] [UNK] [CLS] [SEP]");
    }
  }
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (!index_.emplace(words_[i], static_cast<int>(i)).second) {
      throw Error("duplicate vocabulary entry: " + words_[i]);
    }
  }
}

std::vector<std::string> Vocabulary::split_words(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string w;
  while (in >> w) {
    std::transform(w.begin(), w.end(), w.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.push_back(std::move(w));
  }
  return out;
}

Vocabulary Vocabulary::build(const std::vector<Dialogue>& dialogues, int min_freq,
                             std::size_t max_size) {
  std::map<std::string, long> counts;
  auto count = [&](const std::string& text) {
    for (auto& w : split_words(text)) ++counts[w];
  };
  for (const auto& d : dialogues) {
    for (const auto& ex : d.exchanges) {
      count(ex.user.text);
      if (ex.system) count(ex.system->text);
    }
  }
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> words = kSpecials;
  for (auto& [w, c] : ranked) {
    if (c < min_freq) break;
    if (max_size > 0 && words.size() >= max_size) break;
    if (std::find(kSpecials.begin(), kSpecials.end(), w) != kSpecials.end()) continue;
    words.push_back(w);
  }
  return Vocabulary(std::move(words));
}

int Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  return ids;
}

void Vocabulary::tokenize(Dialogue& d) const {
  for (auto& ex : d.exchanges) {
    ex.user.tokens = encode(ex.user.text);
    if (ex.system) ex.system->tokens = encode(ex.system->text);
  }
}

void Vocabulary::tokenize(std::vector<Dialogue>& ds) const {
  for (auto& d : ds) tokenize(d);
}

}  // namespace usda
