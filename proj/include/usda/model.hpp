// The joint USE/DAR model: hierarchical encoder, supervised CRF head or
// clustering head, satisfaction head, and the two pre-training heads.

#pragma once

#include "usda/cluster.hpp"
#include "usda/corpus.hpp"
#include "usda/crf.hpp"
#include "usda/encoder.hpp"
#include "usda/satisfaction.hpp"
#include "usda/vocabulary.hpp"

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace usda {

enum class Mode { kStlUse, kStlDar, kMtl, kClu };

const char* mode_name(Mode m);  // "stl-use", "stl-dar", "mtl", "clu"
Mode mode_from_name(const std::string& name);

struct ModelConfig {
  EncoderConfig encoder;
  cluster::ClusterConfig cluster;
  satisfaction::SatisfactionConfig satisfaction;
  int num_da_labels = 0;  // supervised label inventory size (0 when unlabeled)
  Mode mode = Mode::kMtl;
  bool viterbi = true;    // DAR inference: Viterbi or per-turn argmax
};

/// Eval-mode output for one dialogue.
struct Prediction {
  int satisfaction = 0;
  satisfaction::FusionTrace trace;
  std::vector<int> dialogue_acts;  // decoded labels (supervised) or cluster ids (clu)
};

class UsdaModel {
 public:
  UsdaModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed);

  UsdaModel(const UsdaModel&) = delete;
  UsdaModel& operator=(const UsdaModel&) = delete;
  UsdaModel(UsdaModel&&) = default;

  struct Forward {
    ExchangeRepresentations reps;
    ad::Var da_scores;                          // supervised A, when computed
    std::optional<cluster::ClusterOutput> cluster;
    ad::Var cluster_input;                      // c as seen by the clustering head
    std::optional<satisfaction::SatisfactionHead::Output> use;
  };

  Forward forward(const Dialogue& dialogue, const nn::Context& ctx) const;

  struct Losses {
    ad::Var use;    // undefined in stl-dar
    ad::Var dar;    // undefined in stl-use
    ad::Var total;
  };
  /// Joint objective for the configured mode with DAR weight `lambda`.
  Losses losses(const Forward& fwd, const Dialogue& dialogue, double lambda) const;

  Prediction predict(const Dialogue& dialogue) const;

  /// Tokenizes with this model's vocabulary.
  void prepare(Dialogue& d) const { vocab_.tokenize(d); }
  void prepare(std::vector<Dialogue>& ds) const { vocab_.tokenize(ds); }

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  nn::ParameterStore& parameters() { return store_; }
  const nn::ParameterStore& parameters() const { return store_; }

  HierarchicalEncoder& encoder() { return encoder_; }
  const HierarchicalEncoder& encoder() const { return encoder_; }
  const crf::DarCrfHead& dar() const { return dar_; }
  const cluster::ClusterNetwork& clusters() const { return cluster_; }
  const satisfaction::SatisfactionHead& use_head() const { return use_; }
  const nn::Linear& srs_head() const { return srs_head_; }
  const nn::Linear& did_head() const { return did_head_; }

  bool has_dar() const { return config_.num_da_labels > 0; }
  /// Width of the dialogue-act features fed to the satisfaction head.
  int act_dim() const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  nn::ParameterStore store_;
  HierarchicalEncoder encoder_;
  crf::DarCrfHead dar_;
  cluster::ClusterNetwork cluster_;
  satisfaction::SatisfactionHead use_;
  nn::Linear srs_head_;
  nn::Linear did_head_;
};

/// Joint loss on plain numbers:
/// mtl/clu: use + lambda * dar; stl-use: use; stl-dar: dar.
double joint_loss(double use_loss, double dar_loss, double lambda, Mode mode);

/// Assigns every user turn of `dialogues` to a cluster with the model and
/// ranks words per cluster.
std::vector<cluster::WordCounts> cluster_top_words(const UsdaModel& model,
                                                   const std::vector<Dialogue>& dialogues, int n,
                                                   const std::set<std::string>& stop_words);

}  // namespace usda
