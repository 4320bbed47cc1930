#include "usda/trainer.hpp"

#include "usda/error.hpp"
#include "usda/optim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <thread>

namespace usda {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error("lambda must be non-negative");
  if (!(learning_rate > 0.0)) throw Error("learning_rate must be positive");
  if (batch_size < 1) throw Error("batch_size must be positive");
  if (warmup_steps < 0) throw Error("warmup_steps must be non-negative");
  if (max_epochs < 0) throw Error("max_epochs must be non-negative");
  if (threads < 1) throw Error("threads must be positive");
  if (vocab_min_freq < 1) throw Error("vocab_min_freq must be positive");
}

double EvalReport::selection_score() const {
  if (use) return use->macro_f1;
  if (dar) return dar->macro_f1;
  return 0.0;
}

nlohmann::json EvalReport::to_json(const std::optional<DaVocab>& da_vocab) const {
  nlohmann::json j = nlohmann::json::object();
  if (use) j["use"] = use->to_json({"dissatisfied", "neutral", "satisfied"});
  if (dar) j["dar"] = dar->to_json(da_vocab.value_or(DaVocab{}));
  return j;
}

EvalReport evaluate(const UsdaModel& model, const std::vector<Dialogue>& dialogues, int threads) {
  if (dialogues.empty()) throw Error("empty evaluation set");
  EvalReport report;
  report.predictions.resize(dialogues.size());
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), dialogues.size());
  auto run = [&](std::size_t w) {
    for (std::size_t i = w; i < dialogues.size(); i += workers) {
      report.predictions[i] = model.predict(dialogues[i]);
    }
  };
  if (workers == 1) {
    run(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run(w);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const Mode mode = model.config().mode;
  if (mode != Mode::kStlDar) {
    std::vector<int> gold, pred;
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
      gold.push_back(static_cast<int>(dialogues[i].satisfaction));
      pred.push_back(report.predictions[i].satisfaction);
    }
    report.use = classification_report(gold, pred, kNumSatisfactionClasses);
  }
  if (model.has_dar() && mode != Mode::kClu) {
    std::vector<int> gold, pred;
    for (std::size_t i = 0; i < dialogues.size(); ++i) {
      const auto& labels = dialogues[i].da_labels;
      const auto& acts = report.predictions[i].dialogue_acts;
      if (!labels || acts.size() != labels->size()) continue;
      gold.insert(gold.end(), labels->begin(), labels->end());
      pred.insert(pred.end(), acts.begin(), acts.end());
    }
    if (!gold.empty()) report.dar = classification_report(gold, pred, model.config().num_da_labels);
  }
  return report;
}

namespace {

[[noreturn]] void abort_batch(const std::vector<const Dialogue*>& batch, const Dialogue& offender,
                              double loss, const TrainConfig& config, int epoch) {
  std::ostringstream msg;
  msg << "non-finite loss " << loss << " at epoch " << epoch << " on dialogue " << offender.id
      << "; batch:";
  for (const Dialogue* d : batch) msg << ' ' << d->id;
  if (!config.dump_dir.empty()) {
    std::filesystem::create_directories(config.dump_dir);
    const auto path = config.dump_dir / ("nonfinite_epoch" + std::to_string(epoch) + ".jsonl");
    std::ofstream out(path);
    for (const Dialogue* d : batch) out << dialogue_to_json(*d).dump() << '\n';
    msg << "; dumped to " << path.string();
  }
  throw Error(msg.str());
}

}  // namespace

TrainResult train(UsdaModel& model, std::vector<Dialogue> train_set,
                  std::vector<Dialogue> valid_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  const Mode mode = model.config().mode;
  if (train_set.empty()) throw Error("empty training set");
  if (mode == Mode::kMtl || mode == Mode::kStlDar) {
    for (const auto& d : train_set) {
      if (!d.da_labels) throw Error("mode " + std::string(mode_name(mode)) +
                                    " needs DA labels; dialogue " + d.id + " has none");
    }
  }
  model.prepare(train_set);
  model.prepare(valid_set);

  TrainResult result;
  if (config.max_epochs == 0) return result;

  auto& store = model.parameters();
  std::unique_ptr<optim::Optimizer> optimizer;
  if (config.optimizer == OptimizerKind::kAdam) {
    optimizer = std::make_unique<optim::Adam>(store, config.learning_rate);
  } else {
    optimizer = std::make_unique<optim::Sgd>(store, config.learning_rate);
  }

  nn::Rng order_rng(config.seed);
  nn::Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const nn::Context ctx{true, &dropout_rng};
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<ad::Matrix> best = store.snapshot();
  bool have_best = false;
  long steps = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochRecord record;
    record.epoch = epoch;
    std::size_t batches = 0;
    const auto bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<const Dialogue*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(&train_set[order[i]]);
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      store.zero_grad();
      double loss = 0.0, use = 0.0, dar = 0.0;
      for (const Dialogue* d : batch) {
        const auto fwd = model.forward(*d, ctx);
        const auto l = model.losses(fwd, *d, config.lambda);
        const double total = l.total.scalar();
        if (!std::isfinite(total)) abort_batch(batch, *d, total, config, epoch);
        ad::backward(ad::scale(l.total, inv));
        loss += total * inv;
        if (l.use.defined()) use += l.use.scalar() * inv;
        if (l.dar.defined()) dar += l.dar.scalar() * inv;
      }
      if (config.clip_norm > 0.0) optim::clip_grad_norm(store, config.clip_norm);
      optimizer->set_learning_rate(optim::warmup_rate(config.learning_rate, steps++, config.warmup_steps));
      optimizer->step();
      record.train_loss += loss;
      record.train_use += use;
      record.train_dar += dar;
      ++batches;
    }
    record.train_loss /= static_cast<double>(batches);
    record.train_use /= static_cast<double>(batches);
    record.train_dar /= static_cast<double>(batches);

    bool improved = valid_set.empty();
    if (!valid_set.empty()) {
      const EvalReport report = evaluate(model, valid_set, config.threads);
      record.valid_score = report.selection_score();
      if (report.dar) record.valid_dar_f1 = report.dar->macro_f1;
      improved = !have_best || record.valid_score > result.best_valid_score;
    }
    if (improved) {
      best = store.snapshot();
      have_best = true;
      result.best_epoch = epoch;
      result.best_valid_score = record.valid_score;
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
  }
  store.restore(best);
  return result;
}

}  // namespace usda
