#include "usda/pretrain.hpp"

#include "usda/error.hpp"
#include "usda/metrics.hpp"
#include "usda/model.hpp"
#include "usda/optim.hpp"
#include "usda/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace usda::pretrain {

using nlohmann::json;

const char* perturbation_name(Perturbation p) {
  switch (p) {
    case Perturbation::kNone:
      return "none";
    case Perturbation::kReplace:
      return "replace";
    case Perturbation::kDelete:
      return "delete";
    case Perturbation::kShuffle:
      return "shuffle";
  }
  return "?";
}

Perturbation perturbation_from_name(const std::string& name) {
  if (name == "none") return Perturbation::kNone;
  if (name == "replace") return Perturbation::kReplace;
  if (name == "delete") return Perturbation::kDelete;
  if (name == "shuffle") return Perturbation::kShuffle;
  throw Error("unknown perturbation: " + name);
}

std::optional<std::string> check_label_consistency(const PretrainSample& s) {
  const auto turns = s.dialogue.exchanges.size();
  if (s.srs_labels.size() != turns) return "srs_labels length differs from number of exchanges";
  if (turns < 2) return "dialogue has fewer than 2 exchanges";
  for (int l : s.srs_labels) {
    if (l != 0 && l != 1) return "srs label not binary";
  }
  if (s.did_label != 0 && s.did_label != 1) return "did label not binary";
  const bool all_ones =
      std::all_of(s.srs_labels.begin(), s.srs_labels.end(), [](int l) { return l == 1; });
  switch (s.perturbation) {
    case Perturbation::kNone:
      if (!all_ones || s.did_label != 1) return "positive sample must be all ones with did 1";
      break;
    case Perturbation::kReplace: {
      if (s.did_label != 0) return "replaced sample must have did 0";
      if (s.positions.empty()) return "replaced sample lists no positions";
      for (std::size_t t = 0; t < turns; ++t) {
        const bool replaced =
            std::find(s.positions.begin(), s.positions.end(), static_cast<int>(t)) !=
            s.positions.end();
        if (s.srs_labels[t] != (replaced ? 0 : 1)) return "srs label disagrees with replacement";
        if (replaced && !s.dialogue.exchanges[t].system) return "replaced turn has no response";
      }
      break;
    }
    case Perturbation::kDelete:
    case Perturbation::kShuffle:
      if (!all_ones) return "incoherence sample must have all srs labels 1";
      if (s.did_label != 0) return "incoherence sample must have did 0";
      if (s.perturbation == Perturbation::kShuffle) {
        bool identity = true;
        for (std::size_t i = 0; i < s.permutation.size(); ++i) {
          identity = identity && s.permutation[i] == static_cast<int>(i);
        }
        if (identity) return "shuffle permutation is the identity";
      }
      break;
  }
  for (std::size_t t = 0; t + 1 < turns; ++t) {
    if (!s.dialogue.exchanges[t].system) return "missing system response before the final turn";
  }
  return std::nullopt;
}

PretrainSample make_positive(const Dialogue& dialogue) {
  PretrainSample s;
  s.dialogue = dialogue;
  s.srs_labels.assign(dialogue.exchanges.size(), 1);
  s.did_label = 1;
  return s;
}

namespace {

std::vector<std::size_t> system_turns(const Dialogue& d) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < d.exchanges.size(); ++t) {
    if (d.exchanges[t].system) out.push_back(t);
  }
  return out;
}

int uniform_int(nn::Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace

PretrainSample make_srs_negative(const Dialogue& dialogue, const Bm25Index& index, nn::Rng& rng,
                                 const SrsOptions& options) {
  std::vector<std::size_t> candidates_turns = system_turns(dialogue);
  if (candidates_turns.size() < 2) {
    throw Error("srs negative for " + dialogue.id + " needs at least 2 system turns");
  }
  const int turns = static_cast<int>(dialogue.exchanges.size());
  const int k = uniform_int(rng, 1, std::max(1, turns / 2));
  std::shuffle(candidates_turns.begin(), candidates_turns.end(), rng);

  PretrainSample s = make_positive(dialogue);
  s.did_label = 0;
  s.perturbation = Perturbation::kReplace;
  for (std::size_t turn : candidates_turns) {
    if (static_cast<int>(s.positions.size()) == k) break;
    const auto& original = dialogue.exchanges[turn].system->text;
    const auto original_words = Vocabulary::split_words(original);
    const std::vector<double> sims = index.normalized_scores(original_words);
    std::vector<std::size_t> eligible;
    for (std::size_t doc : index.system_documents()) {
      if (index.ref(doc).dialogue_id == dialogue.id) continue;
      const double sim = sims[doc];
      const bool in_band = options.above_threshold
                               ? sim >= options.threshold
                               : (sim < options.threshold && sim >= options.sim_min);
      if (!in_band) continue;
      if (index.terms(doc) == original_words) continue;
      eligible.push_back(doc);
    }
    if (eligible.empty()) continue;
    const std::size_t pick =
        eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
    s.dialogue.exchanges[turn].system->text = index.text(pick);
    s.dialogue.exchanges[turn].system->tokens.clear();
    s.srs_labels[turn] = 0;
    s.positions.push_back(static_cast<int>(turn));
  }
  if (s.positions.empty()) throw Error("unconstructible sample: no confounder for " + dialogue.id);
  std::sort(s.positions.begin(), s.positions.end());
  s.dialogue.id = dialogue.id + "#srs";
  return s;
}

PretrainSample make_did_negative(const Dialogue& dialogue, DidMode mode, nn::Rng& rng) {
  const int turns = static_cast<int>(dialogue.exchanges.size());
  PretrainSample s;
  s.did_label = 0;
  if (mode == DidMode::kDelete) {
    if (turns < 3) throw Error("delete perturbation needs at least 3 exchanges: " + dialogue.id);
    const int k = std::min(uniform_int(rng, 1, std::max(1, turns / 2)), turns - 2);
    std::vector<int> order(static_cast<std::size_t>(turns));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    s.positions.assign(order.begin(), order.begin() + k);
    std::sort(s.positions.begin(), s.positions.end());
    s.dialogue = dialogue;
    s.dialogue.exchanges.clear();
    if (s.dialogue.da_labels) s.dialogue.da_labels->clear();
    for (int t = 0; t < turns; ++t) {
      if (std::binary_search(s.positions.begin(), s.positions.end(), t)) continue;
      s.dialogue.exchanges.push_back(dialogue.exchanges[static_cast<std::size_t>(t)]);
      if (dialogue.da_labels) s.dialogue.da_labels->push_back((*dialogue.da_labels)[t]);
    }
    s.perturbation = Perturbation::kDelete;
    s.dialogue.id = dialogue.id + "#del";
  } else {
    std::vector<std::size_t> eligible = system_turns(dialogue);
    if (eligible.size() < 2) {
      throw Error("shuffle perturbation needs at least 2 exchanges with a system response: " +
                  dialogue.id);
    }
    const int hi = std::max(2, turns / 2);
    const int k = std::min(uniform_int(rng, 2, hi), static_cast<int>(eligible.size()));
    std::shuffle(eligible.begin(), eligible.end(), rng);
    for (int i = 0; i < k; ++i) s.positions.push_back(static_cast<int>(eligible[i]));
    std::sort(s.positions.begin(), s.positions.end());
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    const std::vector<int> identity = perm;
    do {
      std::shuffle(perm.begin(), perm.end(), rng);
    } while (perm == identity);
    s.permutation = perm;
    s.dialogue = dialogue;
    for (int i = 0; i < k; ++i) {
      const auto dst = static_cast<std::size_t>(s.positions[i]);
      const auto src = static_cast<std::size_t>(s.positions[static_cast<std::size_t>(perm[i])]);
      s.dialogue.exchanges[dst] = dialogue.exchanges[src];
      if (dialogue.da_labels) (*s.dialogue.da_labels)[dst] = (*dialogue.da_labels)[src];
    }
    s.perturbation = Perturbation::kShuffle;
    s.dialogue.id = dialogue.id + "#shuf";
  }
  s.srs_labels.assign(s.dialogue.exchanges.size(), 1);
  return s;
}

GeneratedSamples generate_samples(const std::vector<Dialogue>& dialogues, const Bm25Index& index,
                                  nn::Rng& rng, const GenerateOptions& options) {
  if (options.neg_ratio < 0.0) throw Error("neg_ratio must be non-negative");
  GeneratedSamples out;
  std::bernoulli_distribution extra(options.neg_ratio - std::floor(options.neg_ratio));
  const int whole = static_cast<int>(std::floor(options.neg_ratio));
  auto count = [&]() { return whole + (extra(rng) ? 1 : 0); };
  for (const auto& d : dialogues) {
    if (d.satisfaction != Satisfaction::kSatisfied) continue;
    out.samples.push_back(make_positive(d));
    ++out.positives;
    int n = 0;
    if (options.srs) {
      const int wanted = count();
      for (int i = 0; i < wanted; ++i) {
        try {
          auto s = make_srs_negative(d, index, rng, options.srs_options);
          s.dialogue.id += std::to_string(n++);
          out.samples.push_back(std::move(s));
        } catch (const Error&) {
          ++out.skipped;
        }
      }
    }
    if (options.did) {
      const int wanted = count();
      for (int i = 0; i < wanted; ++i) {
        const DidMode mode = std::bernoulli_distribution(0.5)(rng) ? DidMode::kDelete
                                                                   : DidMode::kShuffle;
        try {
          auto s = make_did_negative(d, mode, rng);
          s.dialogue.id += std::to_string(n++);
          out.samples.push_back(std::move(s));
        } catch (const Error&) {
          ++out.skipped;
        }
      }
    }
  }
  return out;
}

json sample_to_json(const PretrainSample& s) {
  json j = dialogue_to_json(s.dialogue);
  j["srs_labels"] = s.srs_labels;
  j["did_label"] = s.did_label;
  json p{{"type", perturbation_name(s.perturbation)}, {"positions", s.positions}};
  if (s.perturbation == Perturbation::kShuffle) p["permutation"] = s.permutation;
  j["perturbation"] = std::move(p);
  return j;
}

PretrainSample sample_from_json(const json& record) {
  PretrainSample s;
  s.dialogue = dialogue_from_json(record);
  try {
    s.srs_labels = record.at("srs_labels").get<std::vector<int>>();
    s.did_label = record.at("did_label").get<int>();
    const auto& p = record.at("perturbation");
    s.perturbation = perturbation_from_name(p.at("type").get<std::string>());
    s.positions = p.at("positions").get<std::vector<int>>();
    if (p.contains("permutation")) s.permutation = p.at("permutation").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(std::string("malformed pre-training sample: ") + e.what());
  }
  return s;
}

void write_samples(const std::filesystem::path& path, const std::vector<PretrainSample>& samples) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

std::vector<PretrainSample> read_samples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<PretrainSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const json record = json::parse(line);
      if (record.is_object() && !record.contains("id") && record.contains("manifest")) continue;
      out.push_back(sample_from_json(record));
      if (auto bad = check_label_consistency(out.back())) throw Error(*bad);
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

namespace {

// Binary cross-entropy from logits z [n x 1] against labels, summed.
ad::Var bce_sum(const ad::Var& z, const std::vector<int>& labels) {
  const std::vector<ad::Var> parts{ad::constant(ad::Matrix::Zero(z.rows(), 1)), z};
  const ad::Var logp = ad::log_softmax_rows(ad::hstack(parts));
  ad::Matrix mask = ad::Matrix::Zero(z.rows(), 2);
  for (std::size_t i = 0; i < labels.size(); ++i) mask(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return ad::scale(ad::sum(ad::mul(logp, ad::constant(mask))), -1.0);
}

struct SampleForward {
  ad::Var srs_logits;  // rows: exchanges with a system response
  ad::Var did_logit;
  std::vector<int> srs_labels;
};

SampleForward forward_sample(const UsdaModel& model, const PretrainSample& sample,
                             const nn::Context& ctx) {
  Dialogue d = sample.dialogue;
  model.prepare(d);
  const ad::Var c = model.encoder().encode(d, ctx).c;
  SampleForward f;
  std::vector<ad::Var> rows;
  for (std::size_t t = 0; t < d.exchanges.size(); ++t) {
    if (!d.exchanges[t].system) continue;
    rows.push_back(ad::slice_rows(c, static_cast<Eigen::Index>(t), 1));
    f.srs_labels.push_back(sample.srs_labels[t]);
  }
  if (!rows.empty()) f.srs_logits = model.srs_head()(ad::vstack(rows));
  f.did_logit = model.did_head()(ad::mean_rows(c));
  return f;
}

}  // namespace

PretrainLosses pretrain_step(const std::vector<const PretrainSample*>& batch, UsdaModel& model,
                             const nn::Context& ctx) {
  PretrainLosses losses;
  if (batch.empty()) return losses;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const PretrainSample* sample : batch) {
    const SampleForward f = forward_sample(model, *sample, ctx);
    ad::Var srs = ad::scalar_constant(0.0);
    if (f.srs_logits.defined()) {
      srs = ad::scale(bce_sum(f.srs_logits, f.srs_labels),
                      1.0 / static_cast<double>(f.srs_labels.size()));
    }
    const ad::Var did = bce_sum(f.did_logit, {sample->did_label});
    const ad::Var total = ad::scale(ad::add(srs, did), inv);
    if (!std::isfinite(total.scalar())) throw Error("non-finite pre-training loss at " + sample->dialogue.id);
    ad::backward(total);
    losses.srs += srs.scalar() * inv;
    losses.did += did.scalar() * inv;
  }
  return losses;
}

PretrainMetrics evaluate_pretrain(const UsdaModel& model, const std::vector<PretrainSample>& data) {
  ad::NoGradGuard no_grad;
  const nn::Context ctx{false, nullptr};
  std::vector<int> srs_gold, srs_pred, did_gold, did_pred;
  for (const auto& s : data) {
    const SampleForward f = forward_sample(model, s, ctx);
    for (std::size_t i = 0; i < f.srs_labels.size(); ++i) {
      srs_gold.push_back(f.srs_labels[i]);
      srs_pred.push_back(f.srs_logits.value()(static_cast<Eigen::Index>(i), 0) > 0.0 ? 1 : 0);
    }
    did_gold.push_back(s.did_label);
    did_pred.push_back(f.did_logit.scalar() > 0.0 ? 1 : 0);
  }
  PretrainMetrics m;
  if (!srs_gold.empty()) {
    const auto r = classification_report(srs_gold, srs_pred, 2);
    m.srs_macro_f1 = r.macro_f1;
    m.srs_accuracy = r.accuracy;
  }
  if (!did_gold.empty()) {
    const auto r = classification_report(did_gold, did_pred, 2);
    m.did_macro_f1 = r.macro_f1;
    m.did_accuracy = r.accuracy;
  }
  return m;
}

std::vector<PretrainEpoch> run_pretraining(UsdaModel& model,
                                           const std::vector<PretrainSample>& train,
                                           const std::vector<PretrainSample>& valid,
                                           const PretrainConfig& config) {
  if (config.batch_size < 1) throw Error("batch_size must be positive");
  if (config.warmup_steps < 0) throw Error("warmup_steps must be non-negative");
  nn::Rng rng(config.seed);
  optim::Adam adam(model.parameters(), config.learning_rate);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<PretrainEpoch> history;
  const nn::Context ctx{true, &rng};
  long steps = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    PretrainEpoch record;
    record.epoch = epoch;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::vector<const PretrainSample*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(config.batch_size)); ++i) {
        batch.push_back(&train[order[i]]);
      }
      model.parameters().zero_grad();
      const auto l = pretrain_step(batch, model, ctx);
      optim::clip_grad_norm(model.parameters(), config.clip_norm);
      adam.set_learning_rate(optim::warmup_rate(config.learning_rate, steps++, config.warmup_steps));
      adam.step();
      record.train.srs += l.srs;
      record.train.did += l.did;
      ++batches;
    }
    if (batches > 0) {
      record.train.srs /= static_cast<double>(batches);
      record.train.did /= static_cast<double>(batches);
    }
    if (!valid.empty()) record.valid = evaluate_pretrain(model, valid);
    history.push_back(record);
  }
  return history;
}

}  // namespace usda::pretrain
