#include "usda/bm25.hpp"

#include "usda/error.hpp"
#include "usda/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace usda::pretrain {

Bm25Index Bm25Index::build(const std::vector<Dialogue>& corpus, Bm25Params params) {
  std::vector<std::vector<std::string>> docs;
  std::vector<UtteranceRef> refs;
  std::vector<std::string> texts;
  for (const auto& d : corpus) {
    for (std::size_t t = 0; t < d.exchanges.size(); ++t) {
      const auto& ex = d.exchanges[t];
      docs.push_back(Vocabulary::split_words(ex.user.text));
      refs.push_back({d.id, t, Speaker::kUser});
      texts.push_back(ex.user.text);
      if (ex.system) {
        docs.push_back(Vocabulary::split_words(ex.system->text));
        refs.push_back({d.id, t, Speaker::kSystem});
        texts.push_back(ex.system->text);
      }
    }
  }
  Bm25Index index = build(std::move(docs), params);
  index.refs_ = std::move(refs);
  index.texts_ = std::move(texts);
  index.system_docs_.clear();
  for (std::size_t i = 0; i < index.refs_.size(); ++i) {
    if (index.refs_[i].speaker == Speaker::kSystem) index.system_docs_.push_back(i);
  }
  return index;
}

Bm25Index Bm25Index::build(std::vector<std::vector<std::string>> documents, Bm25Params params) {
  if (documents.empty()) throw Error("cannot build a BM25 index over an empty corpus");
  Bm25Index index;
  index.params_ = params;
  index.doc_terms_ = std::move(documents);
  double total = 0.0;
  for (std::size_t i = 0; i < index.doc_terms_.size(); ++i) {
    const auto& terms = index.doc_terms_[i];
    index.doc_len_.push_back(static_cast<double>(terms.size()));
    total += static_cast<double>(terms.size());
    std::map<std::string, int> tf;
    for (const auto& w : terms) ++tf[w];
    for (const auto& [w, c] : tf) index.postings_[w].emplace_back(i, c);
    index.refs_.push_back({std::to_string(i), 0, Speaker::kSystem});
    index.texts_.push_back({});
    index.system_docs_.push_back(i);
  }
  index.avg_len_ = total / static_cast<double>(index.doc_terms_.size());
  if (index.avg_len_ <= 0.0) index.avg_len_ = 1.0;
  return index;
}

double Bm25Index::idf(const std::string& term) const {
  const double n_docs = static_cast<double>(doc_terms_.size());
  auto it = postings_.find(term);
  const double n = it == postings_.end() ? 0.0 : static_cast<double>(it->second.size());
  return std::log(1.0 + (n_docs - n + 0.5) / (n + 0.5));
}

double Bm25Index::term_score(double tf, double doc_len, double idf_value) const {
  const double denom = tf + params_.k1 * (1.0 - params_.b + params_.b * doc_len / avg_len_);
  return idf_value * tf * (params_.k1 + 1.0) / denom;
}

std::vector<double> Bm25Index::scores(const std::vector<std::string>& query) const {
  std::vector<double> out(doc_terms_.size(), 0.0);
  const std::set<std::string> unique(query.begin(), query.end());
  for (const auto& term : unique) {
    auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const auto& [doc, tf] : it->second) {
      out[doc] += term_score(static_cast<double>(tf), doc_len_[doc], w);
    }
  }
  return out;
}

double Bm25Index::score(const std::vector<std::string>& query, std::size_t doc) const {
  const std::set<std::string> unique(query.begin(), query.end());
  const auto& terms = doc_terms_.at(doc);
  double s = 0.0;
  for (const auto& term : unique) {
    const auto tf = std::count(terms.begin(), terms.end(), term);
    if (tf > 0) s += term_score(static_cast<double>(tf), doc_len_[doc], idf(term));
  }
  return s;
}

double Bm25Index::self_score(const std::vector<std::string>& query) const {
  std::map<std::string, int> tf;
  for (const auto& w : query) ++tf[w];
  double s = 0.0;
  const double len = static_cast<double>(query.size());
  for (const auto& [w, c] : tf) s += term_score(static_cast<double>(c), len, idf(w));
  return s;
}

std::vector<double> Bm25Index::normalized_scores(const std::vector<std::string>& query) const {
  std::vector<double> out = scores(query);
  const double self = self_score(query);
  for (auto& s : out) s = self > 0.0 ? std::clamp(s / self, 0.0, 1.0) : 0.0;
  return out;
}

std::vector<std::pair<std::size_t, double>> Bm25Index::top_n(const std::vector<std::string>& query,
                                                            std::size_t n) const {
  const std::vector<double> s = normalized_scores(query);
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i = 0; i < std::min(n, order.size()); ++i) out.emplace_back(order[i], s[order[i]]);
  return out;
}

}  // namespace usda::pretrain
