// Okapi BM25 over every utterance of a dialogue corpus, used to draw
// confounding system responses for response-selection pre-training.

#pragma once

#include "usda/corpus.hpp"

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace usda::pretrain {

struct Bm25Params {
  double k1 = 1.5;
  double b = 0.75;
};

struct UtteranceRef {
  std::string dialogue_id;
  std::size_t turn = 0;
  Speaker speaker = Speaker::kUser;
};

class Bm25Index {
 public:
  /// Indexes every user and system utterance once. Throws on an empty corpus.
  static Bm25Index build(const std::vector<Dialogue>& corpus, Bm25Params params = {});
  static Bm25Index build(std::vector<std::vector<std::string>> documents, Bm25Params params = {});

  std::size_t size() const { return doc_terms_.size(); }
  const UtteranceRef& ref(std::size_t doc) const { return refs_.at(doc); }
  const std::string& text(std::size_t doc) const { return texts_.at(doc); }
  const std::vector<std::string>& terms(std::size_t doc) const { return doc_terms_.at(doc); }
  const std::vector<std::size_t>& system_documents() const { return system_docs_; }
  double average_length() const { return avg_len_; }
  const Bm25Params& params() const { return params_; }

  /// log(1 + (N - n + 0.5) / (n + 0.5)), n = documents containing the term.
  double idf(const std::string& term) const;

  /// Raw BM25 of every document against `query` (unique query terms).
  std::vector<double> scores(const std::vector<std::string>& query) const;
  double score(const std::vector<std::string>& query, std::size_t doc) const;

  /// BM25 of the query scored against itself as a document.
  double self_score(const std::vector<std::string>& query) const;

  /// scores / self_score, clipped to [0, 1].
  std::vector<double> normalized_scores(const std::vector<std::string>& query) const;

  /// Highest normalized scores, ties broken by document order.
  std::vector<std::pair<std::size_t, double>> top_n(const std::vector<std::string>& query,
                                                    std::size_t n) const;

 private:
  double term_score(double tf, double doc_len, double idf) const;

  Bm25Params params_;
  std::vector<std::vector<std::string>> doc_terms_;
  std::vector<double> doc_len_;
  std::vector<std::string> texts_;
  std::vector<UtteranceRef> refs_;
  std::vector<std::size_t> system_docs_;
  // term -> (doc, tf) postings
  std::unordered_map<std::string, std::vector<std::pair<std::size_t, int>>> postings_;
  double avg_len_ = 0.0;
};

}  // namespace usda::pretrain
