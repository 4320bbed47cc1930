#include "usda/model.hpp"

#include "usda/error.hpp"

#include <iostream>

namespace usda {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::kStlUse:
      return "stl-use";
    case Mode::kStlDar:
      return "stl-dar";
    case Mode::kMtl:
      return "mtl";
    case Mode::kClu:
      return "clu";
  }
  return "?";
}

Mode mode_from_name(const std::string& name) {
  if (name == "stl-use" || name == "stl_use") return Mode::kStlUse;
  if (name == "stl-dar" || name == "stl_dar") return Mode::kStlDar;
  if (name == "mtl") return Mode::kMtl;
  if (name == "clu") return Mode::kClu;
  throw Error("unknown mode: " + name);
}

UsdaModel::UsdaModel(const ModelConfig& config, Vocabulary vocab, std::uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.encoder.vocab_size = static_cast<int>(vocab_.size());
  if ((config_.mode == Mode::kMtl || config_.mode == Mode::kStlDar) && config_.num_da_labels < 1) {
    throw Error(std::string("mode ") + mode_name(config_.mode) + " requires dialogue-act labels");
  }
  nn::Rng rng(seed);
  const int d = config_.encoder.hidden_dim;
  encoder_ = HierarchicalEncoder(store_, config_.encoder, rng);
  if (config_.num_da_labels > 0) dar_ = crf::DarCrfHead(store_, d, config_.num_da_labels, rng);
  cluster_ = cluster::ClusterNetwork(store_, d, config_.cluster, rng);
  const int latent = config_.cluster.resolved_latent_dim(d);
  if (config_.mode == Mode::kClu && latent < config_.cluster.clusters) {
    std::clog << "warning: latent_dim " << latent << " < K " << config_.cluster.clusters
              << "; memory rows cannot be exactly orthonormal\n";
  }
  use_ = satisfaction::SatisfactionHead(store_, d, act_dim(), config_.satisfaction, rng);
  srs_head_ = nn::Linear(store_, "pretrain.srs", d, 1, rng);
  did_head_ = nn::Linear(store_, "pretrain.did", d, 1, rng);
}

int UsdaModel::act_dim() const {
  if (config_.mode == Mode::kClu || config_.num_da_labels == 0) return config_.cluster.clusters;
  return config_.num_da_labels;
}

UsdaModel::Forward UsdaModel::forward(const Dialogue& dialogue, const nn::Context& ctx) const {
  Forward f;
  f.reps = encoder_.encode(dialogue, ctx);
  const ad::Var& c = f.reps.c;
  const bool content_only = config_.satisfaction.content_only;
  const bool need_use = config_.mode != Mode::kStlDar;
  const bool use_clusters = config_.mode == Mode::kClu || (config_.num_da_labels == 0);

  ad::Var act;
  if (use_clusters) {
    if (config_.mode == Mode::kClu || !content_only) {
      f.cluster_input = config_.cluster.stop_gradient ? ad::detach(c) : c;
      f.cluster = cluster_.forward(f.cluster_input);
      act = cluster_.features(*f.cluster);
    }
  } else if (config_.mode != Mode::kStlUse || !content_only) {
    f.da_scores = dar_.scores(c);
    act = f.da_scores;
  }
  if (need_use) f.use = use_.forward(c, act);
  return f;
}

UsdaModel::Losses UsdaModel::losses(const Forward& fwd, const Dialogue& dialogue,
                                    double lambda) const {
  Losses l;
  const Mode mode = config_.mode;
  if (mode != Mode::kStlDar) {
    l.use = satisfaction::use_loss(fwd.use->logits, static_cast<int>(dialogue.satisfaction));
  }
  if (mode == Mode::kMtl || mode == Mode::kStlDar) {
    if (!dialogue.da_labels) throw Error("dialogue " + dialogue.id + " has no DA labels");
    l.dar = dar_.loss(fwd.da_scores, *dialogue.da_labels);
  } else if (mode == Mode::kClu) {
    l.dar = cluster_.loss(fwd.cluster_input, *fwd.cluster);
  }
  switch (mode) {
    case Mode::kStlUse:
      l.total = l.use;
      break;
    case Mode::kStlDar:
      l.total = l.dar;
      break;
    case Mode::kMtl:
    case Mode::kClu:
      l.total = ad::add(l.use, ad::scale(l.dar, lambda));
      break;
  }
  return l;
}

Prediction UsdaModel::predict(const Dialogue& dialogue) const {
  ad::NoGradGuard no_grad;
  const nn::Context ctx{false, nullptr};
  Dialogue local = dialogue;
  if (!local.exchanges.empty() && local.exchanges.front().user.tokens.empty()) prepare(local);
  const Forward f = forward(local, ctx);
  Prediction p;
  if (f.use) {
    p.trace = f.use->trace;
    p.satisfaction = p.trace.predicted();
  }
  if (f.da_scores.defined()) {
    p.dialogue_acts = dar_.decode(f.da_scores.value(), config_.viterbi);
  } else if (f.cluster) {
    p.dialogue_acts = cluster::assign_clusters(f.cluster->A.value());
  }
  return p;
}

double joint_loss(double use_loss, double dar_loss, double lambda, Mode mode) {
  switch (mode) {
    case Mode::kStlUse:
      return use_loss;
    case Mode::kStlDar:
      return dar_loss;
    case Mode::kMtl:
    case Mode::kClu:
      return use_loss + lambda * dar_loss;
  }
  return use_loss;
}

std::vector<cluster::WordCounts> cluster_top_words(const UsdaModel& model,
                                                   const std::vector<Dialogue>& dialogues, int n,
                                                   const std::set<std::string>& stop_words) {
  ad::NoGradGuard no_grad;
  const nn::Context ctx{false, nullptr};
  std::vector<std::vector<std::string>> words;
  std::vector<int> assignments;
  for (Dialogue d : dialogues) {
    model.prepare(d);
    const ad::Var c = model.encoder().encode(d, ctx).c;
    const auto out = model.clusters().forward(c);
    const auto assigned = cluster::assign_clusters(out.A.value());
    for (std::size_t t = 0; t < d.exchanges.size(); ++t) {
      words.push_back(Vocabulary::split_words(d.exchanges[t].user.text));
      assignments.push_back(assigned[t]);
    }
  }
  return cluster::top_words(words, assignments, model.clusters().config().clusters, n, stop_words);
}

}  // namespace usda
