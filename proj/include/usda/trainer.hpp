// Mini-batch training with per-epoch validation and best-checkpoint
// selection, plus evaluation reports.

#pragma once

#include "usda/corpus.hpp"
#include "usda/metrics.hpp"
#include "usda/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace usda {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  double lambda = 0.01;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_epochs = 20;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  int warmup_steps = 0;    // linear learning-rate warmup, in optimizer steps
  OptimizerKind optimizer = OptimizerKind::kAdam;
  int vocab_min_freq = 1;
  int threads = 1;         // evaluation workers
  std::filesystem::path dump_dir;  // where a non-finite batch is written, if set

  void validate() const;
};

struct EvalReport {
  std::optional<ClassificationReport> use;
  std::optional<ClassificationReport> dar;  // turn level, when DA labels and a DAR output exist
  std::vector<Prediction> predictions;      // aligned with the evaluated dialogues

  /// USE macro-F1, or DAR macro-F1 when only DAR was evaluated.
  double selection_score() const;
  nlohmann::json to_json(const std::optional<DaVocab>& da_vocab = std::nullopt) const;
};

/// Throws on an empty dialogue list. `threads` > 1 evaluates in parallel.
EvalReport evaluate(const UsdaModel& model, const std::vector<Dialogue>& dialogues, int threads = 1);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_use = 0.0;
  double train_dar = 0.0;
  double valid_score = 0.0;
  std::optional<double> valid_dar_f1;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = 0;  // 0 when no epoch ran
  double best_valid_score = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains in place and leaves the model at the best validation epoch.
TrainResult train(UsdaModel& model, std::vector<Dialogue> train_set,
                  std::vector<Dialogue> valid_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace usda
