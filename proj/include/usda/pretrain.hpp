// Task-adaptive pre-training: sample construction for system response
// selection (SRS) and dialogue incoherence detection (DID), and the joint
// pre-training step over the hierarchical encoder.
//
// Label patterns:
//   positive            srs = 1...1, did = 1
//   SRS negative        srs = 0 at replaced turns, 1 elsewhere, did = 0
//   DID negative        srs = 1...1, did = 0

#pragma once

#include "usda/bm25.hpp"
#include "usda/corpus.hpp"
#include "usda/nn.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace usda {
class UsdaModel;
}

namespace usda::pretrain {

enum class Perturbation { kNone, kReplace, kDelete, kShuffle };
enum class DidMode { kDelete, kShuffle };

const char* perturbation_name(Perturbation p);
Perturbation perturbation_from_name(const std::string& name);

struct PretrainSample {
  Dialogue dialogue;
  std::vector<int> srs_labels;  // one per exchange of `dialogue`
  int did_label = 1;
  Perturbation perturbation = Perturbation::kNone;
  std::vector<int> positions;    // replaced turns / deleted or shuffled original turns
  std::vector<int> permutation;  // shuffle only: new order of `positions`
};

/// Returns a description of the first violated label invariant, if any.
std::optional<std::string> check_label_consistency(const PretrainSample& sample);

struct SrsOptions {
  double threshold = 0.7;
  double sim_min = 0.0;
  bool above_threshold = false;  // require score >= threshold instead of < threshold
};

PretrainSample make_positive(const Dialogue& dialogue);

/// Replaces k ~ U[1, floor(T/2)] distinct system responses by confounders drawn
/// uniformly from other dialogues' system utterances whose normalized BM25
/// score against the original is in [sim_min, threshold).
PretrainSample make_srs_negative(const Dialogue& dialogue, const Bm25Index& index, nn::Rng& rng,
                                 const SrsOptions& options = {});

/// delete: removes k ~ U[1, floor(T/2)] exchanges (at least 2 remain).
/// shuffle: applies a non-identity permutation to k >= 2 exchanges that carry
/// a system response.
PretrainSample make_did_negative(const Dialogue& dialogue, DidMode mode, nn::Rng& rng);

struct GenerateOptions {
  bool srs = true;
  bool did = true;
  double neg_ratio = 1.0;  // negatives per positive, per task
  SrsOptions srs_options;
};

struct GeneratedSamples {
  std::vector<PretrainSample> samples;
  std::size_t positives = 0;
  std::size_t skipped = 0;  // negatives that could not be constructed
};

/// Positives are the `satisfied` dialogues of `dialogues`; confounders come from `index`.
GeneratedSamples generate_samples(const std::vector<Dialogue>& dialogues, const Bm25Index& index,
                                  nn::Rng& rng, const GenerateOptions& options = {});

nlohmann::json sample_to_json(const PretrainSample& sample);
PretrainSample sample_from_json(const nlohmann::json& record);
void write_samples(const std::filesystem::path& path, const std::vector<PretrainSample>& samples);
std::vector<PretrainSample> read_samples(const std::filesystem::path& path);

struct PretrainLosses {
  double srs = 0.0;
  double did = 0.0;
  double total() const { return srs + did; }
};

/// Forward/backward over a batch; gradients are averaged over the batch and
/// accumulated into the model. Returns the mean losses.
PretrainLosses pretrain_step(const std::vector<const PretrainSample*>& batch, UsdaModel& model,
                             const nn::Context& ctx);

struct PretrainConfig {
  int epochs = 10;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double clip_norm = 1.0;
  int warmup_steps = 0;
  std::uint64_t seed = 0;
};

struct PretrainMetrics {
  double srs_macro_f1 = 0.0;
  double srs_accuracy = 0.0;
  double did_macro_f1 = 0.0;
  double did_accuracy = 0.0;
};

struct PretrainEpoch {
  int epoch = 0;
  PretrainLosses train;
  std::optional<PretrainMetrics> valid;
};

/// SRS metrics are over exchanges that carry a system response.
PretrainMetrics evaluate_pretrain(const UsdaModel& model, const std::vector<PretrainSample>& data);

std::vector<PretrainEpoch> run_pretraining(UsdaModel& model,
                                           const std::vector<PretrainSample>& train,
                                           const std::vector<PretrainSample>& valid,
                                           const PretrainConfig& config);

}  // namespace usda::pretrain
