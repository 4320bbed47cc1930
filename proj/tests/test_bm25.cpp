#include "doctest.h"
#include "support.hpp"

#include "usda/bm25.hpp"
#include "usda/error.hpp"

#include <cmath>

using usda::pretrain::Bm25Index;

namespace {
Bm25Index three_docs() { return Bm25Index::build({{"a", "b"}, {"a", "c", "c"}, {"d"}}); }
}  // namespace

TEST_CASE("bm25 scores against hand computation") {
  const auto idx = three_docs();
  CHECK(idx.average_length() == doctest::Approx(2.0));
  CHECK(idx.idf("a") == doctest::Approx(std::log(1.6)));
  CHECK(idx.idf("c") == doctest::Approx(std::log(8.0 / 3.0)));
  CHECK(idx.idf("zzz") == doctest::Approx(std::log(1.0 + 3.5 / 0.5)));

  const auto s = idx.scores({"a"});
  CHECK(s[0] == doctest::Approx(std::log(1.6)));
  CHECK(s[1] == doctest::Approx(std::log(1.6) * 2.5 / 3.0625));
  CHECK(s[2] == 0.0);

  CHECK(idx.score({"c"}, 1) == doctest::Approx(std::log(8.0 / 3.0) * 5.0 / 4.0625));
  // repeated query terms count once
  CHECK(idx.score({"c", "c"}, 1) == doctest::Approx(idx.score({"c"}, 1)));
  CHECK(idx.self_score({"a"}) == doctest::Approx(std::log(1.6) * 2.5 / 1.9375));
  CHECK(idx.normalized_scores({"a"})[0] == doctest::Approx(0.775));
}

TEST_CASE("a query equal to a document scores 1 against it") {
  const auto idx = three_docs();
  CHECK(idx.normalized_scores({"a", "b"})[0] == doctest::Approx(1.0));
  CHECK(idx.normalized_scores({"a", "c", "c"})[1] == doctest::Approx(1.0));
}

TEST_CASE("no shared terms gives zero") {
  const auto idx = three_docs();
  for (double v : idx.normalized_scores({"q", "r"})) CHECK(v == 0.0);
  for (double v : idx.normalized_scores({})) CHECK(v == 0.0);
}

TEST_CASE("normalized scores stay in [0, 1]") {
  std::mt19937_64 rng(3);
  const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
  std::vector<std::vector<std::string>> docs;
  for (int i = 0; i < 30; ++i) {
    std::vector<std::string> d;
    for (int j = 0; j < 1 + static_cast<int>(rng() % 6); ++j) d.push_back(words[rng() % words.size()]);
    docs.push_back(d);
  }
  const auto idx = Bm25Index::build(docs);
  for (const auto& q : docs) {
    for (double v : idx.normalized_scores(q)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("top_n orders by score and keeps document order on ties") {
  const auto idx = Bm25Index::build({{"x"}, {"a"}, {"a"}, {"a", "x"}});
  const auto top = idx.top_n({"a"}, 3);
  REQUIRE(top.size() == 3);
  CHECK(top[0].first == 1);
  CHECK(top[1].first == 2);
  CHECK(top[2].first == 3);
  CHECK(idx.top_n({"a"}, 10).size() == 4);
}

TEST_CASE("corpus index covers user and system utterances") {
  const auto d = testing::make_dialogue("d1", {"hello there", "thanks"}, {"hi"});
  const auto idx = Bm25Index::build(std::vector<usda::Dialogue>{d});
  CHECK(idx.size() == 3);
  REQUIRE(idx.system_documents().size() == 1);
  const auto& ref = idx.ref(idx.system_documents()[0]);
  CHECK(ref.dialogue_id == "d1");
  CHECK(ref.turn == 0);
  CHECK(idx.text(idx.system_documents()[0]) == "hi");
}

TEST_CASE("empty corpus is an error") {
  CHECK_THROWS_AS(Bm25Index::build(std::vector<std::vector<std::string>>{}), usda::Error);
  CHECK_THROWS_AS(Bm25Index::build(std::vector<usda::Dialogue>{}), usda::Error);
}
