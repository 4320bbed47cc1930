#include "doctest.h"
#include "support.hpp"

#include "usda/error.hpp"
#include "usda/optim.hpp"
#include "usda/metrics.hpp"
#include "usda/synthetic.hpp"
#include "usda/trainer.hpp"
#include "usda/vocabulary.hpp"

#include <cmath>
#include <filesystem>
#include <limits>

using namespace usda;

namespace {

std::vector<Dialogue> corpus(std::size_t n, std::uint64_t seed) {
  synthetic::SyntheticOptions o;
  o.dialogues = n;
  o.seed = seed;
  o.max_turns = 5;
  return synthetic::generate(o);
}

std::vector<double> flat(const UsdaModel& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters().parameters()) {
    out.insert(out.end(), p.var.value().data(), p.var.value().data() + p.var.value().size());
  }
  return out;
}

TrainConfig quick(int epochs) {
  TrainConfig c;
  c.max_epochs = epochs;
  c.batch_size = 8;
  c.seed = 3;
  c.lambda = 1.0;
  return c;
}

}  // namespace

TEST_CASE("metrics on a degenerate prediction") {
  const auto r = classification_report({0, 1, 2}, {0, 0, 0}, 3);
  CHECK(r.accuracy == doctest::Approx(1.0 / 3));
  CHECK(r.macro_recall == doctest::Approx(1.0 / 3));
  CHECK(r.macro_precision == doctest::Approx(1.0 / 9));
  CHECK(r.macro_f1 == doctest::Approx(1.0 / 6));
  CHECK(r.confusion[1][0] == 1);
  CHECK(r.per_class[0].support == 1);
}

TEST_CASE("perfect predictions score 1 and absent classes are skipped") {
  const auto r = classification_report({0, 2, 2, 0}, {0, 2, 2, 0}, 3);
  CHECK(r.accuracy == 1.0);
  CHECK(r.macro_precision == 1.0);
  CHECK(r.macro_recall == 1.0);
  CHECK(r.macro_f1 == 1.0);
  CHECK_FALSE(r.per_class[1].counted);
  const auto single = classification_report({1, 1}, {1, 1}, 3);
  CHECK(single.per_class[1].f1 == 1.0);
  CHECK(single.macro_f1 == 1.0);
}

TEST_CASE("accuracy is the confusion trace over the total and macros are per-class means") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> g, p;
    for (int i = 0; i < 30; ++i) {
      g.push_back(static_cast<int>(rng() % 4));
      p.push_back(static_cast<int>(rng() % 4));
    }
    const auto r = classification_report(g, p, 4);
    int trace = 0;
    for (int k = 0; k < 4; ++k) trace += r.confusion[k][k];
    CHECK(r.accuracy == doctest::Approx(trace / 30.0));
    double f = 0.0;
    int n = 0;
    for (const auto& c : r.per_class) {
      if (!c.counted) continue;
      f += c.f1;
      ++n;
      CHECK(c.f1 >= 0.0);
      CHECK(c.f1 <= 1.0);
    }
    CHECK(r.macro_f1 == doctest::Approx(f / n));
  }
}

TEST_CASE("bad metric input throws") {
  CHECK_THROWS_AS(classification_report({}, {}, 3), Error);
  CHECK_THROWS_AS(classification_report({0}, {0, 1}, 3), Error);
  CHECK_THROWS_AS(classification_report({3}, {0}, 3), Error);
}

TEST_CASE("joint loss by mode") {
  CHECK(joint_loss(1.0, 2.0, 0.01, Mode::kMtl) == doctest::Approx(1.02));
  CHECK(joint_loss(1.0, 2.0, 0.01, Mode::kClu) == doctest::Approx(1.02));
  CHECK(joint_loss(1.0, 2.0, 0.0, Mode::kMtl) == 1.0);
  CHECK(joint_loss(1.0, 2.0, 0.5, Mode::kStlUse) == 1.0);
  CHECK(joint_loss(7.0, 2.0, 0.5, Mode::kStlDar) == 2.0);
}

TEST_CASE("zero epochs leaves the model untouched") {
  const auto data = corpus(20, 1);
  UsdaModel model(testing::tiny_model_config(Mode::kMtl, 6), Vocabulary::build(data), 1);
  const auto before = flat(model);
  const auto res = train(model, data, data, quick(0));
  CHECK(res.history.empty());
  CHECK(res.best_epoch == 0);
  CHECK(flat(model) == before);
}

TEST_CASE("training loss falls over the first epochs") {
  const auto data = corpus(50, 2);
  auto mc = testing::tiny_model_config(Mode::kMtl, 6);
  mc.encoder.token_dim = mc.encoder.hidden_dim = 16;
  mc.encoder.ffn_dim = 32;
  UsdaModel model(mc, Vocabulary::build(data), 2);
  auto cfg = quick(5);
  cfg.batch_size = 4;
  cfg.learning_rate = 3e-3;
  const auto res = train(model, data, data, cfg);
  REQUIRE(res.history.size() == 5);
  for (std::size_t e = 1; e < 5; ++e) CHECK(res.history[e].train_loss < res.history[e - 1].train_loss);
}

TEST_CASE("same seed gives identical runs") {
  const auto data = corpus(30, 3);
  std::vector<double> scores;
  std::vector<std::vector<double>> params;
  for (int run = 0; run < 2; ++run) {
    UsdaModel model(testing::tiny_model_config(Mode::kMtl, 6), Vocabulary::build(data), 4);
    const auto res = train(model, data, data, quick(3));
    scores.push_back(res.best_valid_score);
    params.push_back(flat(model));
  }
  CHECK(scores[0] == scores[1]);
  CHECK(params[0] == params[1]);
}

TEST_CASE("best epoch is restored and its score reproduces") {
  const auto data = corpus(40, 4);
  UsdaModel model(testing::tiny_model_config(Mode::kMtl, 6), Vocabulary::build(data), 5);
  const auto res = train(model, data, data, quick(4));
  const auto rep = evaluate(model, data);
  CHECK(rep.selection_score() == res.best_valid_score);
  CHECK(res.history[static_cast<std::size_t>(res.best_epoch - 1)].valid_score == res.best_valid_score);
  // parallel evaluation agrees
  const auto par = evaluate(model, data, 3);
  CHECK(par.use->macro_f1 == rep.use->macro_f1);
  CHECK(par.dar->macro_f1 == rep.dar->macro_f1);
}

TEST_CASE("mtl with zero lambda matches single-task satisfaction training") {
  const auto data = corpus(30, 5);
  std::vector<double> f1;
  std::vector<int> preds;
  for (Mode mode : {Mode::kMtl, Mode::kStlUse}) {
    UsdaModel model(testing::tiny_model_config(mode, 6), Vocabulary::build(data), 6);
    auto cfg = quick(3);
    cfg.lambda = 0.0;
    train(model, data, data, cfg);
    const auto rep = evaluate(model, data);
    f1.push_back(rep.use->macro_f1);
    for (const auto& p : rep.predictions) preds.push_back(p.satisfaction);
  }
  CHECK(f1[0] == f1[1]);
  const std::size_t half = preds.size() / 2;
  CHECK(std::equal(preds.begin(), preds.begin() + static_cast<long>(half), preds.begin() + static_cast<long>(half)));
}

TEST_CASE("clu and stl-dar produce the expected reports") {
  auto data = corpus(20, 6);
  {
    UsdaModel model(testing::tiny_model_config(Mode::kStlDar, 6), Vocabulary::build(data), 7);
    train(model, data, data, quick(1));
    const auto rep = evaluate(model, data);
    CHECK_FALSE(rep.use);
    REQUIRE(rep.dar);
    CHECK(rep.selection_score() == rep.dar->macro_f1);
  }
  for (auto& d : data) d.da_labels.reset();
  UsdaModel model(testing::tiny_model_config(Mode::kClu, 0), Vocabulary::build(data), 8);
  train(model, data, data, quick(1));
  const auto rep = evaluate(model, data);
  CHECK(rep.use);
  CHECK_FALSE(rep.dar);
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(rep.predictions[i].dialogue_acts.size() == data[i].exchanges.size());
    for (int k : rep.predictions[i].dialogue_acts) CHECK(k < 4);
  }
}

TEST_CASE("labels are required in supervised modes") {
  auto data = corpus(10, 7);
  const Vocabulary vocab = Vocabulary::build(data);
  UsdaModel model(testing::tiny_model_config(Mode::kMtl, 6), vocab, 1);
  data[3].da_labels.reset();
  CHECK_THROWS_AS(train(model, data, data, quick(1)), Error);
  CHECK_THROWS_AS(UsdaModel(testing::tiny_model_config(Mode::kMtl, 0), vocab, 1), Error);
  CHECK_THROWS_AS(evaluate(model, {}), Error);
}

TEST_CASE("a non-finite loss aborts with the batch") {
  const auto data = corpus(10, 8);
  UsdaModel model(testing::tiny_model_config(Mode::kMtl, 6), Vocabulary::build(data), 1);
  model.parameters().find("use.classifier.output.weight")->var.mutable_value()(0, 0) =
      std::numeric_limits<double>::quiet_NaN();
  auto cfg = quick(1);
  cfg.dump_dir = std::filesystem::temp_directory_path() / "usda_nonfinite";
  std::filesystem::remove_all(cfg.dump_dir);
  CHECK_THROWS_WITH_AS(train(model, data, data, cfg), doctest::Contains("non-finite loss"), Error);
  CHECK(std::filesystem::exists(cfg.dump_dir / "nonfinite_epoch1.jsonl"));
  std::filesystem::remove_all(cfg.dump_dir);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.lambda = -1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("warmup ramps linearly then holds") {
  CHECK(optim::warmup_rate(1e-3, 0, 0) == doctest::Approx(1e-3));
  CHECK(optim::warmup_rate(1e-3, 0, 4) == doctest::Approx(2.5e-4));
  CHECK(optim::warmup_rate(1e-3, 3, 4) == doctest::Approx(1e-3));
  CHECK(optim::warmup_rate(1e-3, 50, 4) == doctest::Approx(1e-3));
  TrainConfig c;
  c.warmup_steps = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}
