#pragma once

#include "usda/corpus.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace usda {

/// Lowercase whitespace tokenizer with a frequency-built word list.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> words);

  /// Words seen at least `min_freq` times, most frequent first (ties by word).
  static Vocabulary build(const std::vector<Dialogue>& dialogues, int min_freq = 1,
                          std::size_t max_size = 0);

  static std::vector<std::string> split_words(const std::string& text);

  int id(const std::string& word) const;
  const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return words_.size(); }
  const std::vector<std::string>& words() const { return words_; }

  std::vector<int> encode(const std::string& text) const;
  void tokenize(Dialogue& d) const;
  void tokenize(std::vector<Dialogue>& ds) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace usda
